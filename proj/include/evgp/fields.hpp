#pragma once

#include <cmath>
#include <span>
#include <unordered_set>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "evgp/common.hpp"
#include "evgp/gp.hpp"

namespace evgp {

/// GP occupancy field over the image plane: unit targets at the support
/// points, zero-mean prior. The posterior mean is near 1 at support points
/// and decays to 0 away from them.
class OccupancyField {
  public:
    static OccupancyField build(std::span<const Vec2> points, SqExpKernel kernel,
                                double noise_var) {
        if (points.empty()) throw std::invalid_argument("occupancy field needs support points");
        OccupancyField f;
        f.kernel_ = kernel;
        const auto n = static_cast<Eigen::Index>(points.size());
        f.support_.resize(n, 2);
        for (Eigen::Index i = 0; i < n; ++i)
            f.support_.row(i) = points[static_cast<std::size_t>(i)].transpose();

        Eigen::MatrixXd A = sqexp_gram(kernel, f.support_);
        A.diagonal().array() += noise_var;
        Eigen::LLT<Eigen::MatrixXd> llt(A);
        if (llt.info() != Eigen::Success) {
            if (noise_var > 0.0) {
                A.diagonal().array() += GpModel::kJitter;
                llt.compute(A);
            }
            if (llt.info() != Eigen::Success)
                throw SingularModelError("occupancy field Gram is not positive definite");
        }
        f.w_ = llt.solve(Eigen::VectorXd::Ones(n));
        return f;
    }

    Eigen::Index size() const { return support_.rows(); }
    const Eigen::MatrixXd& support() const { return support_; }
    const SqExpKernel& kernel() const { return kernel_; }

    double mean(const Vec2& q) const {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < support_.rows(); ++i) {
            double dx = q.x() - support_(i, 0), dy = q.y() - support_(i, 1);
            acc += w_[i] * kernel_.from_sq_dist(dx * dx + dy * dy);
        }
        return acc;
    }

    Vec2 mean_gradient(const Vec2& q) const {
        const double inv_l2 = 1.0 / (kernel_.lengthscale * kernel_.lengthscale);
        Vec2 g = Vec2::Zero();
        for (Eigen::Index i = 0; i < support_.rows(); ++i) {
            double dx = q.x() - support_(i, 0), dy = q.y() - support_(i, 1);
            double k = w_[i] * kernel_.from_sq_dist(dx * dx + dy * dy) * inv_l2;
            g.x() -= k * dx;
            g.y() -= k * dy;
        }
        return g;
    }

  private:
    Eigen::MatrixXd support_;  // n x 2
    Eigen::VectorXd w_;        // (K + noise I)^-1 1
    SqExpKernel kernel_;
};

/// Negative-log occupancy: a continuous distance-to-closest-support field.
/// The occupancy mean is clamped to (floor_eps, 1] before the log, so the
/// field is non-negative and finite everywhere.
class DistanceField {
  public:
    DistanceField() = default;
    explicit DistanceField(OccupancyField occ, double floor_eps = 1e-12)
        : occ_(std::move(occ)), eps_(floor_eps) {
        if (eps_ <= 0.0) throw std::invalid_argument("distance field floor must be positive");
    }

    const OccupancyField& occupancy() const { return occ_; }
    double floor_eps() const { return eps_; }

    double distance(const Vec2& q) const {
        double g = occ_.mean(q);
        return -std::log(std::min(std::max(g, eps_), 1.0));
    }

    /// Analytic gradient -grad(g)/g; zero in the saturated far field (g <=
    /// eps) and on the clamped plateau (g >= 1) where the field is constant.
    Vec2 gradient(const Vec2& q) const {
        double g = occ_.mean(q);
        if (g <= eps_ || g >= 1.0) return Vec2::Zero();
        return -occ_.mean_gradient(q) / g;
    }

    /// distance and gradient from one occupancy evaluation
    std::pair<double, Vec2> distance_and_gradient(const Vec2& q) const {
        double g = occ_.mean(q);
        if (g <= eps_) return {-std::log(eps_), Vec2::Zero()};
        if (g >= 1.0) return {0.0, Vec2::Zero()};
        return {-std::log(g), -occ_.mean_gradient(q) / g};
    }

  private:
    OccupancyField occ_;
    double eps_ = 1e-12;
};

/// Thin a point set by spatial binning: keeps the first point of each square
/// bin, preserving input order. Deterministic for a fixed input order.
inline std::vector<Vec2> thin_points(std::span<const Vec2> points, double bin_size) {
    std::vector<Vec2> out;
    out.reserve(points.size());
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(points.size() * 2);
    for (const Vec2& p : points) {
        auto bx = static_cast<std::int32_t>(std::floor(p.x() / bin_size));
        auto by = static_cast<std::int32_t>(std::floor(p.y() / bin_size));
        std::uint64_t key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(bx)) << 32) |
                            static_cast<std::uint32_t>(by);
        if (seen.insert(key).second) out.push_back(p);
    }
    return out;
}

/// Build a distance field over a point set, thinning the support by spatial
/// binning at half the kernel lengthscale when it exceeds `max_support`.
inline DistanceField build_distance_field(std::span<const Vec2> points, SqExpKernel kernel,
                                          double noise_var, std::size_t max_support = 1000,
                                          double floor_eps = 1e-12) {
    if (points.size() > max_support) {
        std::vector<Vec2> thinned = thin_points(points, 0.5 * kernel.lengthscale);
        return DistanceField(OccupancyField::build(thinned, kernel, noise_var), floor_eps);
    }
    return DistanceField(OccupancyField::build(points, kernel, noise_var), floor_eps);
}

/// Debug helper: rasterize a field mean on a regular grid, row-major text.
template <typename FieldFn>
inline std::string rasterize_field(const FieldFn& f, double x0, double x1, double y0, double y1,
                                   double step) {
    std::string out;
    for (double y = y0; y <= y1 + 1e-12; y += step) {
        bool first = true;
        for (double x = x0; x <= x1 + 1e-12; x += step) {
            if (!first) out += ' ';
            out += format_double(f(Vec2(x, y)));
            first = false;
        }
        out += '\n';
    }
    return out;
}

}  // namespace evgp
