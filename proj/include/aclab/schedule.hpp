#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace aclab {

/// zeta_t = 1 / (1 + t)
inline double zeta_cont(double t) {
    if (!(t >= 0.0))
        throw std::invalid_argument("zeta_cont: t must be nonnegative");
    return 1.0 / (1.0 + t);
}

/// eta_t = 1 / (1 + log^2(t + 1))
inline double eta_cont(double t) {
    if (!(t >= 0.0))
        throw std::invalid_argument("eta_cont: t must be nonnegative");
    const double l = std::log1p(t);
    return 1.0 / (1.0 + l * l);
}

inline double zeta_discrete(long long k, long long n) {
    if (k < 0 || n < 1)
        throw std::invalid_argument("zeta_discrete: need k >= 0 and N >= 1");
    return 1.0 / (1.0 + static_cast<double>(k) / static_cast<double>(n));
}

inline double eta_discrete(long long k, long long n) {
    if (k < 0 || n < 1)
        throw std::invalid_argument("eta_discrete: need k >= 0 and N >= 1");
    const double l = std::log1p(static_cast<double>(k) / static_cast<double>(n));
    return 1.0 / (1.0 + l * l);
}

/**
 * Learning rate zeta and exploration rate eta as functions of rescaled time.
 * The discrete rates at step k with scaling N are the continuous rates at
 * t = k / N, which is exact for the default schedule.
 */
class RateSchedule {
  public:
    enum class Kind { Standard, Constant, Tabulated };

    /// zeta_t = 1/(1+t), eta_t = 1/(1+log^2(t+1)).
    static RateSchedule standard() { return RateSchedule(Kind::Standard); }

    /// Frozen rates, used to isolate fixed-point behaviour in tests.
    static RateSchedule constant(double zeta, double eta) {
        check_values(zeta, eta);
        RateSchedule s(Kind::Constant);
        s.times_ = {0.0};
        s.zetas_ = {zeta};
        s.etas_ = {eta};
        return s;
    }

    /// Piecewise-linear in t through the given knots, flat outside them.
    static RateSchedule tabulated(std::vector<double> times, std::vector<double> zetas,
                                  std::vector<double> etas) {
        if (times.empty() || times.size() != zetas.size() || times.size() != etas.size())
            throw std::invalid_argument("RateSchedule::tabulated: knot arrays must be nonempty and equal length");
        if (!std::is_sorted(times.begin(), times.end()) || times.front() < 0.0)
            throw std::invalid_argument("RateSchedule::tabulated: knot times must be sorted and nonnegative");
        for (std::size_t i = 0; i < times.size(); ++i) {
            check_values(zetas[i], etas[i]);
            if (i > 0 && (zetas[i] > zetas[i - 1] || etas[i] > etas[i - 1]))
                throw std::invalid_argument("RateSchedule::tabulated: rates must be nonincreasing");
        }
        RateSchedule s(Kind::Tabulated);
        s.times_ = std::move(times);
        s.zetas_ = std::move(zetas);
        s.etas_ = std::move(etas);
        return s;
    }

    Kind kind() const { return kind_; }

    std::string name() const {
        switch (kind_) {
        case Kind::Standard: return "paper";
        case Kind::Constant: return "constant";
        case Kind::Tabulated: return "tabulated";
        }
        return "?";
    }

    double zeta(double t) const { return kind_ == Kind::Standard ? zeta_cont(t) : lookup(zetas_, t); }
    double eta(double t) const { return kind_ == Kind::Standard ? eta_cont(t) : lookup(etas_, t); }

    double zeta(long long k, long long n) const {
        return kind_ == Kind::Standard ? zeta_discrete(k, n) : zeta(discrete_time(k, n));
    }
    double eta(long long k, long long n) const {
        return kind_ == Kind::Standard ? eta_discrete(k, n) : eta(discrete_time(k, n));
    }

    const std::vector<double>& knot_times() const { return times_; }
    const std::vector<double>& knot_zetas() const { return zetas_; }
    const std::vector<double>& knot_etas() const { return etas_; }

  private:
    explicit RateSchedule(Kind k) : kind_(k) {}

    static void check_values(double zeta, double eta) {
        if (!(zeta >= 0.0 && zeta <= 1.0))
            throw std::invalid_argument("RateSchedule: zeta must lie in [0,1]");
        if (!(eta >= 0.0 && eta <= 1.0))
            throw std::invalid_argument("RateSchedule: eta must lie in [0,1]");
    }

    static double discrete_time(long long k, long long n) {
        if (k < 0 || n < 1)
            throw std::invalid_argument("RateSchedule: need k >= 0 and N >= 1");
        return static_cast<double>(k) / static_cast<double>(n);
    }

    double lookup(const std::vector<double>& values, double t) const {
        if (!(t >= 0.0))
            throw std::invalid_argument("RateSchedule: t must be nonnegative");
        if (t <= times_.front())
            return values.front();
        if (t >= times_.back())
            return values.back();
        const auto it = std::upper_bound(times_.begin(), times_.end(), t);
        const std::size_t i = static_cast<std::size_t>(it - times_.begin());
        const double w = (t - times_[i - 1]) / (times_[i] - times_[i - 1]);
        return values[i - 1] + w * (values[i] - values[i - 1]);
    }

    Kind kind_;
    std::vector<double> times_;
    std::vector<double> zetas_;
    std::vector<double> etas_;
};

/// Integral of fn over [a, b] using Gauss-Kronrod on dyadic panels.
inline double integrate_panels(const std::function<double(double)>& fn, double a, double b) {
    if (b <= a)
        return 0.0;
    double total = 0.0;
    double lo = a;
    double width = 1.0;
    while (lo < b) {
        const double hi = std::min(b, std::max(lo + width, 2.0 * lo));
        total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(fn, lo, hi, 15, 1e-14);
        width = hi - lo;
        lo = hi;
    }
    return total;
}

struct PropertyResult {
    std::string name;
    bool passed = false;
    double measured = 0.0;
    std::string detail;
};

struct PropertyReport {
    std::vector<PropertyResult> results;

    bool all_passed() const {
        return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
    }
};

struct RatePropertyOptions {
    /// Minimum increment of the zeta integral over [T/2, T] to count as unbounded growth.
    double divergence_floor = 0.5;
    /// Maximum increment over [T/2, T] for an integral to count as convergent.
    double tail_tol = 1e-2;
    /// Samples of zeta/eta^n on the log grid over [T/10, T].
    int ratio_samples = 200;
};

/**
 * Checks, on [0, horizon], the four schedule properties needed for global
 * convergence: divergent integral of zeta, convergent integrals of zeta^2
 * and zeta*eta, and zeta/eta^n decreasing to zero. Divergence and
 * convergence are judged from the increment over the last half of the
 * horizon; the ratio is checked on the last decade.
 */
inline PropertyReport check_rate_properties(const RateSchedule& schedule, double horizon,
                                            const std::vector<int>& powers,
                                            const RatePropertyOptions& opt = {}) {
    if (!(horizon >= 10.0))
        throw std::invalid_argument("check_rate_properties: horizon must be at least 10");
    PropertyReport rep;
    auto zeta = [&](double t) { return schedule.zeta(t); };
    auto zeta2 = [&](double t) { return schedule.zeta(t) * schedule.zeta(t); };
    auto zeta_eta = [&](double t) { return schedule.zeta(t) * schedule.eta(t); };
    const double half = horizon / 2.0;

    {
        const double full = integrate_panels(zeta, 0.0, horizon);
        const double tail = integrate_panels(zeta, half, horizon);
        rep.results.push_back({"integral_zeta_diverges", tail >= opt.divergence_floor, tail,
                               "int_0^T zeta = " + std::to_string(full) + ", increment over [T/2,T] = " +
                                   std::to_string(tail)});
    }
    {
        const double tail = integrate_panels(zeta2, half, horizon);
        rep.results.push_back({"integral_zeta_squared_converges", tail <= opt.tail_tol, tail,
                               "increment over [T/2,T] = " + std::to_string(tail)});
    }
    {
        const double tail = integrate_panels(zeta_eta, half, horizon);
        rep.results.push_back({"integral_zeta_eta_converges", tail <= opt.tail_tol, tail,
                               "increment over [T/2,T] = " + std::to_string(tail)});
    }
    {
        bool ok = true;
        double worst_final = 0.0;
        std::string detail;
        const double t_lo = horizon / 10.0;
        for (int n : powers) {
            double prev = 0.0, first = 0.0;
            bool monotone = true;
            for (int i = 0; i < opt.ratio_samples; ++i) {
                const double t = t_lo * std::pow(10.0, static_cast<double>(i) / (opt.ratio_samples - 1));
                const double e = schedule.eta(t);
                const double ratio = e > 0.0 ? schedule.zeta(t) / std::pow(e, n)
                                             : std::numeric_limits<double>::infinity();
                if (i == 0)
                    first = ratio;
                else if (!(ratio <= prev * (1.0 + 1e-12)))
                    monotone = false;
                prev = ratio;
            }
            const bool pass = monotone && std::isfinite(prev) && prev < first;
            ok = ok && pass;
            worst_final = std::max(worst_final, prev);
            detail += "n=" + std::to_string(n) + ": " + std::to_string(first) + " -> " + std::to_string(prev) +
                      (pass ? " ok; " : " FAIL; ");
        }
        rep.results.push_back({"zeta_over_eta_power_decreases", ok, worst_final, detail});
    }
    return rep;
}

} // namespace aclab
