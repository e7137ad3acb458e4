#include "advunlearn/ssreg.hpp"

#include <atomic>

#include <spdlog/spdlog.h>

#include "advunlearn/errors.hpp"

namespace advunlearn {

namespace {

constexpr double kDenomGuard = 1e-12;

struct Centered {
    Matrix a, v;
    Vector norm_a, norm_v;
    Matrix denom;
};

Centered center_and_normalize(const Matrix& z_f, const Matrix& z_v) {
    if (z_f.rows() != z_v.rows() || z_f.cols() != z_v.cols()) {
        throw ShapeError("cross_correlation: batches must have equal shape");
    }
    if (z_f.rows() < 2) {
        throw ShapeError("cross_correlation: batch size must be at least 2");
    }
    Centered c;
    c.a = z_f.rowwise() - z_f.colwise().mean();
    c.v = z_v.rowwise() - z_v.colwise().mean();
    c.norm_a = c.a.colwise().norm().transpose();
    c.norm_v = c.v.colwise().norm().transpose();
    if ((c.norm_a.array() == 0.0).any() || (c.norm_v.array() == 0.0).any()) {
        static std::atomic<bool> warned{false};
        if (!warned.exchange(true)) {
            spdlog::warn("cross_correlation: zero-variance feature column; its correlations are ~0");
        } else {
            spdlog::debug("cross_correlation: zero-variance feature column");
        }
    }
    c.denom = (c.norm_a * c.norm_v.transpose()).array() + kDenomGuard;
    return c;
}

}  // namespace

CrossCorr cross_correlation(const Matrix& z_f, const Matrix& z_v) {
    const Centered c = center_and_normalize(z_f, z_v);
    CrossCorr out;
    out.c = (c.a.transpose() * c.v).cwiseQuotient(c.denom);
    out.batch = static_cast<std::size_t>(z_f.rows());
    return out;
}

double ss_loss(const CrossCorr& corr, double lambda) {
    if (!(lambda >= 0.0)) {
        throw ConfigError("ss_loss lambda must be nonnegative");
    }
    const Matrix& c = corr.c;
    const double diag = (1.0 - c.diagonal().array()).square().sum();
    const double off = c.array().square().sum() - c.diagonal().array().square().sum();
    return diag + lambda * off;
}

SsLossResult ss_loss_with_grad(const Matrix& z_f, const Matrix& z_v, double lambda) {
    const Centered c = center_and_normalize(z_f, z_v);
    SsLossResult r;
    const Matrix num = c.a.transpose() * c.v;
    r.corr.c = num.cwiseQuotient(c.denom);
    r.corr.batch = static_cast<std::size_t>(z_f.rows());
    r.value = ss_loss(r.corr, lambda);

    // dL/dC
    Matrix g = (2.0 * lambda) * r.corr.c;
    g.diagonal() = -2.0 * (1.0 - r.corr.c.diagonal().array());
    const Matrix p = g.cwiseQuotient(c.denom);                         // dL/dnum
    const Matrix q = -(g.cwiseProduct(r.corr.c)).cwiseQuotient(c.denom);  // dL/ddenom
    const Vector d_norm_a = q * c.norm_v;
    const Vector d_norm_v = q.transpose() * c.norm_a;

    Matrix d_a = c.v * p.transpose();
    Matrix d_v = c.a * p;
    for (Eigen::Index i = 0; i < d_a.cols(); ++i) {
        if (c.norm_a[i] > 0.0) {
            d_a.col(i) += (d_norm_a[i] / c.norm_a[i]) * c.a.col(i);
        }
        if (c.norm_v[i] > 0.0) {
            d_v.col(i) += (d_norm_v[i] / c.norm_v[i]) * c.v.col(i);
        }
    }
    r.d_z_f = d_a.rowwise() - d_a.colwise().mean();
    r.d_z_v = d_v.rowwise() - d_v.colwise().mean();
    return r;
}

}  // namespace advunlearn
