#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace aclab {

/// Dense real table indexed [state][action].
using Table = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Actor parameters theta(x,a).
using ThetaTable = Table;
/// Critic estimates Q(x,a).
using CriticTable = Table;

/// Row-major flattening of a state-action pair, xi = x * n_actions + a.
inline std::size_t xi_index(std::size_t x, std::size_t a, std::size_t n_actions) {
    return x * n_actions + a;
}

/// Flattens a [x][a] table into a vector in xi order.
inline Vector flatten(const Table& t) {
    Vector out(t.size());
    for (Eigen::Index x = 0; x < t.rows(); ++x)
        for (Eigen::Index a = 0; a < t.cols(); ++a)
            out(x * t.cols() + a) = t(x, a);
    return out;
}

/// Inverse of flatten for a table with the given shape.
inline Table unflatten(const Vector& v, Eigen::Index n_states, Eigen::Index n_actions) {
    if (v.size() != n_states * n_actions)
        throw std::invalid_argument("unflatten: size mismatch");
    Table out(n_states, n_actions);
    for (Eigen::Index x = 0; x < n_states; ++x)
        for (Eigen::Index a = 0; a < n_actions; ++a)
            out(x, a) = v(x * n_actions + a);
    return out;
}

inline bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

/// Action distribution per state, probs(x,a).
struct PolicyTable {
    Table probs;

    Eigen::Index n_states() const { return probs.rows(); }
    Eigen::Index n_actions() const { return probs.cols(); }
    double operator()(Eigen::Index x, Eigen::Index a) const { return probs(x, a); }
};

/// Raised when a numerical precondition (ergodicity, nonsingularity) fails.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Raised when a model or configuration fails validation.
class ValidationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace aclab
