#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <initializer_list>
#include <string>
#include <utility>

namespace sirbif::ode {

class StiffnessSuspected : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct StepOptions {
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    double h_init = 0.0;  // 0 selects an automatic initial step
    double h_max = std::numeric_limits<double>::infinity();
    double h_min = 1e-12;
};

/// Dormand-Prince 5(4) pair with PI step-size control and the classical
/// fourth-order continuous extension. The stepper advances one accepted step
/// at a time; between t_prev() and t() the solution is available through
/// dense().
template <std::size_t N>
class DormandPrince5 {
public:
    using State = std::array<double, N>;
    using Rhs = std::function<State(double, const State&)>;

    DormandPrince5(Rhs f, double t0, const State& y0, StepOptions opt = {})
        : f_(std::move(f)), opt_(opt), t_(t0), t_prev_(t0), y_(y0), y_prev_(y0)
    {
        if (!(opt_.rel_tol > 0.0) || !(opt_.abs_tol > 0.0))
            throw std::invalid_argument("DormandPrince5: tolerances must be positive");
        k1_ = f_(t_, y_);
        h_ = opt_.h_init > 0.0 ? opt_.h_init : initial_step();
        for (auto& r : cont_)
            r.fill(0.0);
        cont_[0] = y_;
    }

    double t() const noexcept { return t_; }
    double t_prev() const noexcept { return t_prev_; }
    const State& y() const noexcept { return y_; }
    const State& y_prev() const noexcept { return y_prev_; }
    const State& derivative() const noexcept { return k1_; }
    double step_size() const noexcept { return h_; }
    long accepted() const noexcept { return accepted_; }
    long rejected() const noexcept { return rejected_; }

    /// Advances by one accepted step without passing t_limit (t_limit > t()).
    void step(double t_limit)
    {
        bool last_rejected = false;
        for (;;) {
            double h = std::min(h_, opt_.h_max);
            bool hits_limit = false;
            if (t_ + 1.01 * h >= t_limit) {
                h = t_limit - t_;
                hits_limit = true;
            }
            if (hits_limit && h < opt_.h_min) {
                // Sub-resolution remainder: close the gap with an Euler step.
                t_prev_ = t_;
                y_prev_ = y_;
                for (std::size_t i = 0; i < N; ++i)
                    y_[i] += h * k1_[i];
                cont_[0] = y_prev_;
                for (std::size_t i = 0; i < N; ++i) {
                    cont_[1][i] = y_[i] - y_prev_[i];
                    cont_[2][i] = cont_[3][i] = cont_[4][i] = 0.0;
                }
                t_ = t_limit;
                k1_ = f_(t_, y_);
                ++accepted_;
                return;
            }
            if (h < opt_.h_min)
                throw StiffnessSuspected("step size underflow at t=" + std::to_string(t_));

            State ytmp;
            auto combo = [&](std::initializer_list<std::pair<const State*, double>> terms) {
                for (std::size_t i = 0; i < N; ++i) {
                    double acc = 0.0;
                    for (const auto& [k, a] : terms)
                        acc += a * (*k)[i];
                    ytmp[i] = y_[i] + h * acc;
                }
            };
            combo({{&k1_, a21}});
            const State k2 = f_(t_ + c2 * h, ytmp);
            combo({{&k1_, a31}, {&k2, a32}});
            const State k3 = f_(t_ + c3 * h, ytmp);
            combo({{&k1_, a41}, {&k2, a42}, {&k3, a43}});
            const State k4 = f_(t_ + c4 * h, ytmp);
            combo({{&k1_, a51}, {&k2, a52}, {&k3, a53}, {&k4, a54}});
            const State k5 = f_(t_ + c5 * h, ytmp);
            combo({{&k1_, a61}, {&k2, a62}, {&k3, a63}, {&k4, a64}, {&k5, a65}});
            const State k6 = f_(t_ + h, ytmp);
            combo({{&k1_, a71}, {&k3, a73}, {&k4, a74}, {&k5, a75}, {&k6, a76}});
            const State ynew = ytmp;
            const State k7 = f_(t_ + h, ynew);

            double err = 0.0;
            bool finite = true;
            for (std::size_t i = 0; i < N; ++i) {
                const double e =
                    h * (e1 * k1_[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
                const double sc = opt_.abs_tol + opt_.rel_tol * std::max(std::abs(y_[i]), std::abs(ynew[i]));
                err += (e / sc) * (e / sc);
                finite = finite && std::isfinite(ynew[i]);
            }
            err = std::sqrt(err / static_cast<double>(N));
            if (!finite || !std::isfinite(err)) {
                h_ = 0.25 * h;
                ++rejected_;
                last_rejected = true;
                continue;
            }

            const double fac11 = std::pow(err, 0.2 - beta * 0.75);
            if (err <= 1.0) {
                double fac = fac11 / std::pow(facold_, beta);
                fac = std::clamp(fac / safe, 1.0 / facr, 1.0 / facl);
                double hnew = h / fac;
                if (last_rejected)
                    hnew = std::min(hnew, h);
                facold_ = std::max(err, 1e-4);

                for (std::size_t i = 0; i < N; ++i) {
                    const double ydiff = ynew[i] - y_[i];
                    const double bspl = h * k1_[i] - ydiff;
                    cont_[0][i] = y_[i];
                    cont_[1][i] = ydiff;
                    cont_[2][i] = bspl;
                    cont_[3][i] = ydiff - h * k7[i] - bspl;
                    cont_[4][i] = h * (d1 * k1_[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] +
                                       d7 * k7[i]);
                }
                t_prev_ = t_;
                y_prev_ = y_;
                t_ = hits_limit ? t_limit : t_ + h;
                y_ = ynew;
                k1_ = k7;
                // Keep the proposal for the next call even if this step was cut short.
                h_ = hits_limit ? std::max(h_, hnew) : hnew;
                ++accepted_;
                return;
            }
            h_ = h / std::min(facc1, fac11 / safe);
            ++rejected_;
            last_rejected = true;
        }
    }

    /// Continuous extension on [t_prev(), t()].
    State dense(double t) const
    {
        const double h = t_ - t_prev_;
        if (h <= 0.0)
            return y_;
        const double th = (t - t_prev_) / h;
        const double th1 = 1.0 - th;
        State out;
        for (std::size_t i = 0; i < N; ++i)
            out[i] = cont_[0][i] + th * (cont_[1][i] + th1 * (cont_[2][i] + th * (cont_[3][i] + th1 * cont_[4][i])));
        return out;
    }

    /// Integrates up to t_end, invoking on_step() after every accepted step.
    template <typename OnStep>
    void advance_to(double t_end, OnStep&& on_step)
    {
        while (t_ < t_end) {
            step(t_end);
            on_step(*this);
        }
    }

    void advance_to(double t_end)
    {
        while (t_ < t_end)
            step(t_end);
    }

private:
    double initial_step() const
    {
        // Hairer-Norsett-Wanner starting step estimate.
        double dnf = 0.0, dny = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double sk = opt_.abs_tol + opt_.rel_tol * std::abs(y_[i]);
            dnf += (k1_[i] / sk) * (k1_[i] / sk);
            dny += (y_[i] / sk) * (y_[i] / sk);
        }
        double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : 0.01 * std::sqrt(dny / dnf);
        h = std::min(h, opt_.h_max);
        State y1;
        for (std::size_t i = 0; i < N; ++i)
            y1[i] = y_[i] + h * k1_[i];
        const State f1 = f_(t_ + h, y1);
        double der2 = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double sk = opt_.abs_tol + opt_.rel_tol * std::abs(y_[i]);
            der2 += ((f1[i] - k1_[i]) / sk) * ((f1[i] - k1_[i]) / sk);
        }
        der2 = std::sqrt(der2) / h;
        const double der12 = std::max(std::abs(der2), std::sqrt(dnf));
        const double h1 = der12 <= 1e-15 ? std::max(1e-6, std::abs(h) * 1e-3) : std::pow(0.01 / der12, 0.2);
        return std::max(std::min({100.0 * h, h1, opt_.h_max}), 10.0 * opt_.h_min);
    }

    static constexpr double c2 = 0.2, c3 = 0.3, c4 = 0.8, c5 = 8.0 / 9.0;
    static constexpr double a21 = 0.2;
    static constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
    static constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
    static constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                            a54 = -212.0 / 729.0;
    static constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                            a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
    static constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0,
                            a75 = -2187.0 / 6784.0, a76 = 11.0 / 84.0;
    static constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                            e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
    static constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                            d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                            d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
    static constexpr double beta = 0.04, safe = 0.9, facl = 0.2, facr = 10.0;
    static constexpr double facc1 = 1.0 / facl;

    Rhs f_;
    StepOptions opt_;
    double t_, t_prev_;
    State y_, y_prev_;
    State k1_{};
    std::array<State, 5> cont_{};
    double h_ = 0.0;
    double facold_ = 1e-4;
    long accepted_ = 0;
    long rejected_ = 0;
};

}  // namespace sirbif::ode
