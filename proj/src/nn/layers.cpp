#include "advunlearn/nn/layers.hpp"

#include <cmath>

#include "advunlearn/errors.hpp"

namespace advunlearn {

Dense::Dense(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : in_(in), out_(out) {
    w_ = store.add(name + ".weight", {in, out}, true);
    b_ = store.add(name + ".bias", {out}, false);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    auto w = store.matrix(w_);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        w.data()[i] = dist(rng);
    }
}

Matrix Dense::forward(const ParamStore& store, const Matrix& x) const {
    if (static_cast<std::size_t>(x.cols()) != in_) {
        throw ShapeError("dense layer expects " + std::to_string(in_) + " inputs, got " +
                         std::to_string(x.cols()));
    }
    Matrix y = x * store.matrix(w_);
    y.rowwise() += store.matrix(b_).row(0);
    return y;
}

Matrix Dense::backward(ParamStore& store, const Matrix& x, const Matrix& dy) const {
    store.grad_matrix(w_).noalias() += x.transpose() * dy;
    store.grad_matrix(b_).row(0) += dy.colwise().sum();
    return dy * store.matrix(w_).transpose();
}

}  // namespace advunlearn
