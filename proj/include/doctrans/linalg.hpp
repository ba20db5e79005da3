#pragma once

#include <Eigen/Dense>

namespace doctrans {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

template <class Derived>
typename Derived::Scalar logsumexp(const Eigen::MatrixBase<Derived>& v) {
    using S = typename Derived::Scalar;
    const S m = v.maxCoeff();
    if (!std::isfinite(m)) return m;  // all -inf stays -inf
    return m + std::log((v.array() - m).exp().sum());
}

// Rowwise log-sum-exp.
template <class Derived>
Vec<typename Derived::Scalar> logsumexp_rows(const Eigen::MatrixBase<Derived>& m) {
    Vec<typename Derived::Scalar> out(m.rows());
    for (Eigen::Index i = 0; i < m.rows(); ++i) out[i] = logsumexp(m.row(i));
    return out;
}

template <class Derived>
Mat<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
    using S = typename Derived::Scalar;
    Mat<S> out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const S m = logits.row(i).maxCoeff();
        out.row(i) = (logits.row(i).array() - m).exp();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

template <class Derived>
Mat<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
    using S = typename Derived::Scalar;
    Mat<S> out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        out.row(i) = logits.row(i).array() - logsumexp(logits.row(i));
    }
    return out;
}

}  // namespace doctrans
