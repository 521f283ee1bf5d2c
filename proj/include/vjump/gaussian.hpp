/// @file gaussian.hpp Possibly singular multivariate Gaussians and partitioned conditioning.
#pragma once

#include "numeric.hpp"

#include <Eigen/Dense>

#include <optional>
#include <random>
#include <span>
#include <vector>

namespace vjump
{

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Default relative eigenvalue floor: eigenvalues below 1e-10 x trace/dim count as zero.
inline constexpr double default_eigen_floor = 1e-10;

/// Counters for numerically delicate events; owned by a chain.
struct NumericDiagnostics
{
    long floored_eigenvalues = 0; ///< conditioning covariances that needed flooring
    long rejected_updates = 0;    ///< updates rejected because a covariance was indefinite
};

/// Eigendecomposition of a covariance with its floor applied.
struct EigenCache
{
    VectorXd values;  ///< raw eigenvalues, ascending
    MatrixXd vectors; ///< orthonormal eigenvectors as columns
    double floor = 0.0;
    Index rank = 0; ///< number of eigenvalues above the floor
};

/// @brief Mean and covariance of a (possibly singular) Gaussian with a lazily built eigen cache.
///
/// Eigenvalues at or below the floor are treated as exact constraints: sampling adds no variation along
/// them and the pseudo-density ignores them, provided the point lies on the support.
class GaussianSpec
{
public:
    GaussianSpec() = default;

    /// `floor_scale`: variance scale the floor is taken relative to when it exceeds trace/dim.
    GaussianSpec(VectorXd mean, MatrixXd covariance, double floor_rel = default_eigen_floor, double floor_scale = 0.0)
        : mean_(std::move(mean)), cov_(std::move(covariance)), floor_rel_(floor_rel), floor_scale_(floor_scale)
    {
        if (cov_.rows() != cov_.cols() || cov_.rows() != mean_.size())
            throw std::invalid_argument("Gaussian mean and covariance dimensions disagree");
    }

    Index dim() const { return mean_.size(); }
    const VectorXd& mean() const { return mean_; }
    const MatrixXd& covariance() const { return cov_; }

    /// Same covariance (and cached decomposition) with a different mean.
    GaussianSpec with_mean(VectorXd mean) const
    {
        if (mean.size() != mean_.size())
            throw std::invalid_argument("replacement mean has the wrong dimension");
        GaussianSpec copy(*this);
        copy.mean_ = std::move(mean);
        return copy;
    }

    const EigenCache& decomposition() const
    {
        if (!cache_) {
            EigenCache c;
            if (dim() > 0) {
                const Eigen::SelfAdjointEigenSolver<MatrixXd> solver(cov_);
                c.values = solver.eigenvalues();
                c.vectors = solver.eigenvectors();
                const double trace = std::max(cov_.trace(), 0.0);
                c.floor = floor_rel_ * std::max({trace / static_cast<double>(dim()), floor_scale_, 1e-300});
                for (Index i = 0; i < dim(); ++i)
                    if (c.values[i] > c.floor)
                        ++c.rank;
            }
            cache_ = std::move(c);
        }
        return *cache_;
    }

    /// Pseudo log-density on the support; minus infinity for points more than 1e-6 off it.
    double logpdf(const VectorXd& x) const
    {
        const auto& c = decomposition();
        const VectorXd proj = c.vectors.transpose() * (x - mean_);
        double lp = 0.0;
        for (Index i = 0; i < dim(); ++i) {
            if (c.values[i] > c.floor)
                lp += -0.5 * (log_two_pi + std::log(c.values[i]) + proj[i] * proj[i] / c.values[i]);
            else if (std::abs(proj[i]) > 1e-6)
                return neg_inf;
        }
        return lp;
    }

    template <class Rng>
    VectorXd sample(Rng& rng) const
    {
        const auto& c = decomposition();
        std::normal_distribution<double> normal(0.0, 1.0);
        VectorXd x = mean_;
        for (Index i = 0; i < dim(); ++i) {
            const double z = normal(rng); // drawn for every axis so the stream does not depend on rank
            if (c.values[i] > c.floor)
                x += std::sqrt(c.values[i]) * z * c.vectors.col(i);
        }
        return x;
    }

private:
    VectorXd mean_;
    MatrixXd cov_;
    double floor_rel_ = default_eigen_floor;
    double floor_scale_ = 0.0;
    mutable std::optional<EigenCache> cache_;
};

/// Log-density of a nonsingular Gaussian via Cholesky; minus infinity if the covariance is not PD.
inline double gaussian_logpdf(const VectorXd& x, const VectorXd& mean, const MatrixXd& cov)
{
    const Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
        return neg_inf;
    const VectorXd z = llt.matrixL().solve(x - mean);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return -0.5 * (static_cast<double>(x.size()) * log_two_pi + logdet + z.squaredNorm());
}

/// @brief Partitioned conditioning of a joint Gaussian on some of its components.
///
/// Built once from a joint covariance; `apply` then conditions any mean/observation pair that
/// shares that covariance (the two spatial coordinates in a window update). The observed block is
/// inverted through its eigendecomposition with eigenvalues floored at 1e-10 x trace/dim; an
/// eigenvalue below minus that tolerance marks the block as indefinite and the conditioner invalid.
class GaussianConditioner
{
public:
    GaussianConditioner(const MatrixXd& joint_cov, std::span<const Index> free_idx,
                        std::span<const Index> observed_idx, double floor_rel = default_eigen_floor)
        : free_(free_idx.begin(), free_idx.end()), observed_(observed_idx.begin(), observed_idx.end()),
          floor_rel_(floor_rel)
    {
        const Index nf = static_cast<Index>(free_.size());
        const Index no = static_cast<Index>(observed_.size());
        MatrixXd s(no, no);
        MatrixXd cross(nf, no);
        MatrixXd ff(nf, nf);
        for (Index i = 0; i < no; ++i)
            for (Index j = 0; j < no; ++j)
                s(i, j) = 0.5 * (joint_cov(observed_[i], observed_[j]) + joint_cov(observed_[j], observed_[i]));
        for (Index i = 0; i < nf; ++i)
            for (Index j = 0; j < no; ++j)
                cross(i, j) = joint_cov(free_[i], observed_[j]);
        for (Index i = 0; i < nf; ++i)
            for (Index j = 0; j < nf; ++j)
                ff(i, j) = joint_cov(free_[i], free_[j]);
        if (nf > 0)
            free_scale_ = std::max(ff.trace() / static_cast<double>(nf), 0.0);

        if (no > 0) {
            const Eigen::SelfAdjointEigenSolver<MatrixXd> solver(s);
            VectorXd values = solver.eigenvalues();
            const double floor = floor_rel_ * std::max(s.trace() / static_cast<double>(no), 1e-300);
            if (values[0] < -floor) {
                valid_ = false;
                return;
            }
            for (Index i = 0; i < no; ++i) {
                if (values[i] < floor) {
                    values[i] = floor;
                    floored_ = true;
                }
            }
            log_det_ = values.array().log().sum();
            s_inv_ = solver.eigenvectors() * values.cwiseInverse().asDiagonal() * solver.eigenvectors().transpose();
            gain_ = cross * s_inv_;
            MatrixXd cc = ff - gain_ * cross.transpose();
            cond_cov_ = 0.5 * (cc + cc.transpose());
        } else {
            gain_ = MatrixXd::Zero(nf, 0);
            s_inv_ = MatrixXd::Zero(0, 0);
            cond_cov_ = ff;
        }
    }

    bool valid() const { return valid_; }
    bool floored() const { return floored_; }
    const MatrixXd& conditional_covariance() const { return cond_cov_; }
    /// Mean variance of the free block before conditioning.
    double free_scale() const { return free_scale_; }

    struct Result
    {
        VectorXd mean;
        double log_evidence = 0.0;
    };

    Result apply(const VectorXd& joint_mean, const VectorXd& observed_values) const
    {
        const Index no = static_cast<Index>(observed_.size());
        VectorXd resid(no);
        for (Index i = 0; i < no; ++i)
            resid[i] = observed_values[i] - joint_mean[observed_[i]];
        VectorXd mean(static_cast<Index>(free_.size()));
        for (Index i = 0; i < mean.size(); ++i)
            mean[i] = joint_mean[free_[i]];
        Result r;
        r.mean = mean + gain_ * resid;
        r.log_evidence = -0.5 * (static_cast<double>(no) * log_two_pi + log_det_ + resid.dot(s_inv_ * resid));
        return r;
    }

private:
    std::vector<Index> free_;
    std::vector<Index> observed_;
    double floor_rel_;
    bool valid_ = true;
    bool floored_ = false;
    double log_det_ = 0.0;
    double free_scale_ = 0.0;
    MatrixXd s_inv_;
    MatrixXd gain_;
    MatrixXd cond_cov_;
};

/// Conditional law of the free components together with the log-density of the observed values.
struct ConditionedGaussian
{
    GaussianSpec conditional;
    double log_evidence = 0.0;
};

/// Conditions `joint` on `values` at `observed_idx`; the free components are the remaining indices in order.
inline std::optional<ConditionedGaussian> condition(const GaussianSpec& joint, std::span<const Index> observed_idx,
                                                    const VectorXd& values, NumericDiagnostics* diag = nullptr,
                                                    double floor_rel = default_eigen_floor)
{
    std::vector<bool> is_observed(static_cast<std::size_t>(joint.dim()), false);
    for (Index i : observed_idx)
        is_observed.at(static_cast<std::size_t>(i)) = true;
    std::vector<Index> free_idx;
    for (Index i = 0; i < joint.dim(); ++i)
        if (!is_observed[static_cast<std::size_t>(i)])
            free_idx.push_back(i);

    const GaussianConditioner conditioner(joint.covariance(), free_idx, observed_idx, floor_rel);
    if (!conditioner.valid()) {
        if (diag)
            ++diag->rejected_updates;
        return std::nullopt;
    }
    if (conditioner.floored() && diag)
        ++diag->floored_eigenvalues;
    auto r = conditioner.apply(joint.mean(), values);
    return ConditionedGaussian{GaussianSpec(std::move(r.mean), conditioner.conditional_covariance(), floor_rel,
                                                            conditioner.free_scale()),
                               r.log_evidence};
}

template <class Rng>
VectorXd sample_conditioned(const GaussianSpec& spec, Rng& rng)
{
    return spec.sample(rng);
}

inline double conditioned_logpdf(const GaussianSpec& spec, const VectorXd& x)
{
    return spec.logpdf(x);
}

} // namespace vjump
