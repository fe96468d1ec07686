#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace evgp {

/// Dense binary mask with out-of-bounds cells treated as unset.
struct BinaryGrid {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> cells;

    BinaryGrid() = default;
    BinaryGrid(int w, int h) : width(w), height(h), cells(static_cast<std::size_t>(w) * h, 0) {
        if (w <= 0 || h <= 0) throw std::invalid_argument("grid dimensions must be positive");
    }

    bool at(int x, int y) const {
        if (x < 0 || y < 0 || x >= width || y >= height) return false;
        return cells[static_cast<std::size_t>(y) * width + x] != 0;
    }
    void set(int x, int y, bool v) {
        cells[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0;
    }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto c : cells) n += c != 0;
        return n;
    }
    bool empty_mask() const { return count() == 0; }

    bool operator==(const BinaryGrid& o) const {
        return width == o.width && height == o.height && cells == o.cells;
    }
};

/// Erosion with the 3x3 cross: a cell survives if it and its 4-neighbors are set.
inline BinaryGrid erode_cross(const BinaryGrid& g) {
    BinaryGrid out(g.width, g.height);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x)
            out.set(x, y, g.at(x, y) && g.at(x - 1, y) && g.at(x + 1, y) && g.at(x, y - 1) &&
                              g.at(x, y + 1));
    return out;
}

/// Dilation with the 3x3 cross.
inline BinaryGrid dilate_cross(const BinaryGrid& g) {
    BinaryGrid out(g.width, g.height);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x)
            out.set(x, y, g.at(x, y) || g.at(x - 1, y) || g.at(x + 1, y) || g.at(x, y - 1) ||
                              g.at(x, y + 1));
    return out;
}

/// Morphological skeleton: repeatedly erode, dilate the erosion, subtract the
/// opening from the current mask and union the remainder into the skeleton,
/// until the erosion is empty.
inline BinaryGrid skeletonize(const BinaryGrid& mask) {
    BinaryGrid skel(mask.width, mask.height);
    BinaryGrid cur = mask;
    while (!cur.empty_mask()) {
        BinaryGrid eroded = erode_cross(cur);
        BinaryGrid opened = dilate_cross(eroded);
        for (std::size_t i = 0; i < cur.cells.size(); ++i)
            if (cur.cells[i] && !opened.cells[i]) skel.cells[i] = 1;
        cur = std::move(eroded);
    }
    return skel;
}

}  // namespace evgp
