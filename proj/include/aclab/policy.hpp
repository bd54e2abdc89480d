#pragma once

#include "aclab/tables.hpp"

#include <cmath>
#include <stdexcept>

namespace aclab {

/// f(x,a) = exp(theta(x,a)) / sum_a' exp(theta(x,a')), with per-row max subtraction.
inline PolicyTable softmax_policy(const ThetaTable& theta) {
    if (!theta.allFinite())
        throw std::invalid_argument("softmax_policy: non-finite theta entry");
    PolicyTable f{Table(theta.rows(), theta.cols())};
    for (Eigen::Index x = 0; x < theta.rows(); ++x) {
        const double m = theta.row(x).maxCoeff();
        double z = 0.0;
        for (Eigen::Index a = 0; a < theta.cols(); ++a) {
            f.probs(x, a) = std::exp(theta(x, a) - m);
            z += f.probs(x, a);
        }
        f.probs.row(x) /= z;
    }
    return f;
}

/// Softmax of a single row, written into out (size n_actions).
inline void softmax_row(const ThetaTable& theta, Eigen::Index x, Eigen::Ref<Eigen::RowVectorXd> out) {
    const double m = theta.row(x).maxCoeff();
    double z = 0.0;
    for (Eigen::Index a = 0; a < theta.cols(); ++a) {
        out(a) = std::exp(theta(x, a) - m);
        z += out(a);
    }
    out /= z;
}

/**
 * g(x,a) = eta / d_A + (1 - eta) f(x,a).
 *
 * eta = 1 is accepted: the schedule gives eta = 1 at time zero, where g is
 * the uniform law.
 */
inline PolicyTable exploration_policy(const PolicyTable& f, double eta) {
    if (!(eta >= 0.0 && eta <= 1.0))
        throw std::invalid_argument("exploration_policy: eta must lie in [0,1]");
    const double uniform = eta / static_cast<double>(f.n_actions());
    PolicyTable g{(1.0 - eta) * f.probs};
    g.probs.array() += uniform;
    return g;
}

/// Gradient of log f_theta(x,a) with respect to every theta coordinate.
/// Only row x is nonzero: entry (x,b) = 1{b=a} - f(x,b).
inline Table log_policy_gradient(const ThetaTable& theta, Eigen::Index x, Eigen::Index a) {
    if (x < 0 || x >= theta.rows() || a < 0 || a >= theta.cols())
        throw std::out_of_range("log_policy_gradient: index out of range");
    Table grad = Table::Zero(theta.rows(), theta.cols());
    Eigen::RowVectorXd row(theta.cols());
    softmax_row(theta, x, row);
    grad.row(x) = -row;
    grad(x, a) += 1.0;
    return grad;
}

} // namespace aclab
