#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace evgp {

class SingularModelError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Square exponential covariance: k(a,b) = scale * exp(-|a-b|^2 / (2 l^2)).
struct SqExpKernel {
    double scale = 1.0;
    double lengthscale = 1.0;

    double operator()(const Eigen::Ref<const Eigen::VectorXd>& a,
                      const Eigen::Ref<const Eigen::VectorXd>& b) const {
        return from_sq_dist((a - b).squaredNorm());
    }

    double from_sq_dist(double d2) const {
        return scale * std::exp(-d2 / (2.0 * lengthscale * lengthscale));
    }
};

/// Symmetric Gram matrix over the rows of X. Each pair is computed once and
/// mirrored, so the result is exactly symmetric with diagonal exactly
/// k.scale.
inline Eigen::MatrixXd sqexp_gram(const SqExpKernel& k,
                                  const Eigen::Ref<const Eigen::MatrixXd>& X) {
    const Eigen::Index n = X.rows();
    const double inv2l2 = 1.0 / (2.0 * k.lengthscale * k.lengthscale);
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        K(j, j) = k.scale;
        const Eigen::Index m = n - j - 1;
        if (m > 0) {
            Eigen::VectorXd col =
                k.scale * ((X.bottomRows(m).rowwise() - X.row(j)).rowwise().squaredNorm() *
                           -inv2l2)
                              .array()
                              .exp();
            K.block(j + 1, j, m, 1) = col;
            K.block(j, j + 1, 1, m) = col.transpose();
        }
    }
    return K;
}

/// Derivatives of the Gram matrix w.r.t. the kernel hyperparameters
/// (parameter 0 = scale, parameter 1 = lengthscale).
inline Eigen::MatrixXd sqexp_gram_derivative(const SqExpKernel& k,
                                             const Eigen::Ref<const Eigen::MatrixXd>& X,
                                             int param) {
    if (param != 0 && param != 1) throw std::invalid_argument("sqexp kernel has 2 parameters");
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd dK(n, n);
    const double l = k.lengthscale;
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = j; i < n; ++i) {
            double d2 = (X.row(i) - X.row(j)).squaredNorm();
            double kv = k.from_sq_dist(d2);
            double v = param == 0 ? kv / k.scale : kv * d2 / (l * l * l);
            dK(i, j) = v;
            dK(j, i) = v;
        }
    }
    return dK;
}

/// GP regression model with a cached Cholesky factorization of (K + noise I).
/// Immutable after fit(); all queries are re-entrant.
class GpModel {
  public:
    static constexpr double kJitter = 1e-8;

    static GpModel fit(Eigen::MatrixXd X, Eigen::VectorXd y, SqExpKernel kernel,
                       double noise_var) {
        if (X.rows() < 1 || X.rows() != y.size())
            throw std::invalid_argument("gp fit: inputs and targets must be non-empty and equal-sized");
        if (kernel.scale <= 0.0 || kernel.lengthscale <= 0.0)
            throw std::invalid_argument("gp fit: kernel hyperparameters must be positive");
        if (noise_var < 0.0) throw std::invalid_argument("gp fit: negative noise variance");

        GpModel m;
        m.X_ = std::move(X);
        m.y_ = std::move(y);
        m.kernel_ = kernel;
        m.noise_var_ = noise_var;

        Eigen::MatrixXd A = sqexp_gram(kernel, m.X_);
        A.diagonal().array() += noise_var;
        m.llt_.compute(A);
        if (m.llt_.info() != Eigen::Success) {
            // Noise-free models stay strict interpolators: rank deficiency is
            // an input error there, not something to paper over.
            if (noise_var > 0.0) {
                A.diagonal().array() += kJitter;
                m.llt_.compute(A);
                m.jitter_applied_ = true;
            }
            if (m.llt_.info() != Eigen::Success)
                throw SingularModelError("gp fit: covariance matrix is not positive definite");
        }
        m.alpha_ = m.llt_.solve(m.y_);
        return m;
    }

    Eigen::Index size() const { return X_.rows(); }
    Eigen::Index dim() const { return X_.cols(); }
    const Eigen::MatrixXd& inputs() const { return X_; }
    const Eigen::VectorXd& targets() const { return y_; }
    const Eigen::VectorXd& weights() const { return alpha_; }
    const SqExpKernel& kernel() const { return kernel_; }
    double noise_variance() const { return noise_var_; }
    bool jitter_applied() const { return jitter_applied_; }

    Eigen::VectorXd kernel_vector(const Eigen::Ref<const Eigen::VectorXd>& q) const {
        Eigen::VectorXd kq(X_.rows());
        for (Eigen::Index i = 0; i < X_.rows(); ++i)
            kq[i] = kernel_.from_sq_dist((X_.row(i).transpose() - q).squaredNorm());
        return kq;
    }

    double mean(const Eigen::Ref<const Eigen::VectorXd>& q) const {
        return kernel_vector(q).dot(alpha_);
    }

    /// Posterior variance, clamped to be non-negative.
    double variance(const Eigen::Ref<const Eigen::VectorXd>& q) const {
        Eigen::VectorXd kq = kernel_vector(q);
        double v = kernel_.scale - kq.dot(llt_.solve(kq));
        return std::max(v, 0.0);
    }

    double log_marginal_likelihood() const {
        double logdet = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
        return -0.5 * y_.dot(alpha_) - 0.5 * logdet -
               0.5 * static_cast<double>(X_.rows()) * std::log(2.0 * std::numbers::pi);
    }

    /// Gradient of the log marginal likelihood given a provider that fills the
    /// Gram-matrix derivative for each parameter index.
    Eigen::VectorXd lml_gradient(
        std::size_t n_params,
        const std::function<void(std::size_t, Eigen::MatrixXd&)>& gram_derivative) const {
        const Eigen::Index n = X_.rows();
        Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n);
        llt_.solveInPlace(M);          // (K + noise I)^-1
        M.noalias() -= alpha_ * alpha_.transpose();
        // grad_p = 0.5 tr((alpha alpha^T - A^-1) dK) = -0.5 sum(M .* dK)
        Eigen::VectorXd grad(n_params);
        Eigen::MatrixXd dK(n, n);
        for (std::size_t p = 0; p < n_params; ++p) {
            gram_derivative(p, dK);
            grad[static_cast<Eigen::Index>(p)] = -0.5 * M.cwiseProduct(dK).sum();
        }
        return grad;
    }

    /// Gradient w.r.t. the kernel's (scale, lengthscale).
    Eigen::Vector2d lml_kernel_gradient() const {
        Eigen::VectorXd g = lml_gradient(2, [this](std::size_t p, Eigen::MatrixXd& dK) {
            dK = sqexp_gram_derivative(kernel_, X_, static_cast<int>(p));
        });
        return {g[0], g[1]};
    }

  private:
    Eigen::MatrixXd X_;
    Eigen::VectorXd y_;
    SqExpKernel kernel_;
    double noise_var_ = 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd alpha_;
    bool jitter_applied_ = false;
};

}  // namespace evgp
