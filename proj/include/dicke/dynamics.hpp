#pragma once

// Adaptive integration of the full and slaved flows.
//
// The stepper is the Dormand-Prince 8(5,3) pair with its 7th-order
// continuous extension (Hairer, Norsett & Wanner, Solving ODEs I).  Step
// control, the initial step heuristic and the dense output follow DOP853.F;
// the dense coefficients are only formed when an interpolated value inside
// the last accepted step is requested.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dicke/error.hpp"
#include "dicke/model.hpp"

namespace dicke {

struct IntegratorConfig {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    double max_step = 1.0;
    bool renormalize_spin = false;
    double t_end = 100.0;
    double sample_dt = 0.1;

    void validate() const {
        auto fail = [](const std::string& what) { throw ValidationError("IntegratorConfig: " + what); };
        if (!(rel_tol > 0.0 && rel_tol <= 1e-2)) fail("rel_tol must lie in (0, 1e-2]");
        if (!(abs_tol > 0.0 && abs_tol <= 1e-2)) fail("abs_tol must lie in (0, 1e-2]");
        if (!(max_step > 0.0) || !std::isfinite(max_step)) fail("max_step must be finite and > 0");
        if (!(sample_dt > 0.0) || !std::isfinite(sample_dt)) fail("sample_dt must be finite and > 0");
        if (!(t_end >= 0.0) || !std::isfinite(t_end)) fail("t_end must be finite and >= 0");
    }
};

struct IntegrationStats {
    std::uint64_t accepted_steps = 0;
    std::uint64_t rejected_steps = 0;
    std::uint64_t rhs_evaluations = 0;
    double max_energy_drift = 0.0;  ///< relative, over accepted steps and samples
    double max_spin_drift = 0.0;    ///< relative
    double renorm_correction_total = 0.0;
    double renorm_correction_max = 0.0;
};

template <class State>
struct BasicTrajectory {
    std::vector<double> times;
    std::vector<State> states;
    IntegrationStats stats;

    [[nodiscard]] std::size_t size() const noexcept { return times.size(); }
    [[nodiscard]] bool empty() const noexcept { return times.empty(); }
};

using Trajectory = BasicTrajectory<PhaseState>;
using SpinTrajectory = BasicTrajectory<SpinVector>;

/// Step size collapsed below 1e-14 t_end.  Carries everything sampled so far.
template <class State>
class BasicStiffnessError : public ComputationError {
public:
    BasicStiffnessError(const std::string& what, BasicTrajectory<State> partial)
        : ComputationError(what), partial_(std::move(partial)) {}
    [[nodiscard]] const BasicTrajectory<State>& partial() const noexcept { return partial_; }

private:
    BasicTrajectory<State> partial_;
};

using StiffnessError = BasicStiffnessError<PhaseState>;
using SpinStiffnessError = BasicStiffnessError<SpinVector>;

template <std::size_t N>
using Vec = std::array<double, N>;

/// DOP853 stepper for y' = f(t, y) with y in R^N.  F is callable as
/// f(double t, const Vec<N>& y, Vec<N>& dydt).
template <std::size_t N, class F>
class Dop853 {
public:
    using Vector = Vec<N>;

    Dop853(F f, double rel_tol, double abs_tol, double max_step)
        : f_(std::move(f)), rtol_(rel_tol), atol_(abs_tol), hmax_(max_step) {}

    /// Start (or restart) at (t, y).  The next step re-estimates h.
    void reset(double t, const Vector& y) {
        t_ = t;
        t_old_ = t;
        y_ = y;
        y_old_ = y;
        eval(t_, y_, k1_);
        h_ = 0.0;
        reject_ = false;
        facold_ = 1e-4;
        has_step_ = false;
        dense_ready_ = false;
    }

    /// Replace the current state (after a projection) keeping the step size.
    void reset_state(const Vector& y) {
        y_ = y;
        eval(t_, y_, k1_);
    }

    /// One accepted step, never past t_limit.  Returns false when the step
    /// size underflows min_step; the state is unchanged in that case.
    bool step(double t_limit, double min_step) {
        if (t_limit <= t_) return true;
        const double span = t_limit - t_;
        if (h_ <= 0.0) h_ = hinit(std::min(hmax_, span));
        constexpr double fac1 = 1.0 / 3.0;
        constexpr double fac2 = 6.0;
        constexpr double safe = 0.9;
        constexpr double expo = 1.0 / 8.0;
        constexpr double uround = 2.3e-16;
        while (true) {
            bool last = false;
            double h = std::min(h_, hmax_);
            if (t_ + 1.01 * h >= t_limit) {
                h = t_limit - t_;
                last = true;
            }
            if (0.1 * h <= std::abs(t_) * uround) {
                if (!last) return false;
                t_ = t_limit;  // gap below the time resolution
                return true;
            }
            if (h < min_step && !last) return false;
            h_step_ = h;
            step12(h);
            const double err = h * error_estimation();
            const double fac11 = std::pow(err, expo);
            double fac = std::clamp(fac11 / safe, 1.0 / fac2, 1.0 / fac1);
            double hnew = h / fac;
            if (err <= 1.0) {
                facold_ = std::max(err, 1e-4);
                ++accepted_;
                eval(t_ + h, k5_, k4_);
                y_old_ = y_;
                k1_old_ = k1_;
                t_old_ = t_;
                y_ = k5_;
                k1_ = k4_;
                t_ = last ? t_limit : t_ + h;
                has_step_ = true;
                dense_ready_ = false;
                hnew = std::min(hnew, hmax_);
                if (reject_) hnew = std::min(hnew, h);
                reject_ = false;
                // A step clamped to t_limit says little about the natural scale.
                h_ = last ? std::min(std::max(h_, hnew), hmax_) : hnew;
                return true;
            }
            hnew = h / std::min(1.0 / fac1, fac11 / safe);
            reject_ = true;
            if (accepted_ >= 1) ++rejected_;
            h_ = hnew;
        }
    }

    /// Fixed step of size h without error control (used for order checks).
    void fixed_step(double h) {
        h_step_ = h;
        step12(h);
        eval(t_ + h, k5_, k4_);
        y_old_ = y_;
        k1_old_ = k1_;
        t_old_ = t_;
        y_ = k5_;
        k1_ = k4_;
        t_ += h;
        ++accepted_;
        has_step_ = true;
        dense_ready_ = false;
    }

    /// Interpolated state at t within the last accepted step.
    [[nodiscard]] Vector dense(double t) {
        if (!has_step_) return y_;
        if (!dense_ready_) prepare_dense();
        const double s = (t - t_old_) / h_step_;
        const double s1 = 1.0 - s;
        Vector out;
        for (std::size_t i = 0; i < N; ++i) {
            out[i] = rc_[0][i] +
                     s * (rc_[1][i] +
                          s1 * (rc_[2][i] +
                                s * (rc_[3][i] +
                                     s1 * (rc_[4][i] + s * (rc_[5][i] + s1 * (rc_[6][i] + s * rc_[7][i]))))));
        }
        return out;
    }

    [[nodiscard]] double time() const noexcept { return t_; }
    [[nodiscard]] double previous_time() const noexcept { return t_old_; }
    [[nodiscard]] const Vector& state() const noexcept { return y_; }
    [[nodiscard]] const Vector& previous_state() const noexcept { return y_old_; }
    [[nodiscard]] double step_size() const noexcept { return h_; }

    [[nodiscard]] std::uint64_t accepted() const noexcept { return accepted_; }
    [[nodiscard]] std::uint64_t rejected() const noexcept { return rejected_; }
    [[nodiscard]] std::uint64_t evaluations() const noexcept { return nfev_; }

private:
    void eval(double t, const Vector& y, Vector& dy) {
        f_(t, y, dy);
        ++nfev_;
    }

    double hinit(double hmax) {
        double dnf = 0.0;
        double dny = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double sk = atol_ + rtol_ * std::abs(y_[i]);
            dnf += (k1_[i] / sk) * (k1_[i] / sk);
            dny += (y_[i] / sk) * (y_[i] / sk);
        }
        double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
        h = std::min(h, hmax);
        for (std::size_t i = 0; i < N; ++i) w_[i] = y_[i] + h * k1_[i];
        eval(t_ + h, w_, k2_);
        double der2 = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double d = (k2_[i] - k1_[i]) / (atol_ + rtol_ * std::abs(y_[i]));
            der2 += d * d;
        }
        der2 = std::sqrt(der2) / h;
        const double der12 = std::max(std::abs(der2), std::sqrt(dnf));
        const double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 0.125);
        return std::min({100.0 * h, h1, hmax});
    }

    void step12(double h) {
        constexpr double c2 = 0.526001519587677318785587544488e-01;
        constexpr double c3 = 0.789002279381515978178381316732e-01;
        constexpr double c4 = 0.118350341907227396726757197510e+00;
        constexpr double c5 = 0.281649658092772603273242802490e+00;
        constexpr double c6 = 0.333333333333333333333333333333e+00;
        constexpr double c7 = 0.25e+00;
        constexpr double c8 = 0.307692307692307692307692307692e+00;
        constexpr double c9 = 0.651282051282051282051282051282e+00;
        constexpr double c10 = 0.6e+00;
        constexpr double c11 = 0.857142857142857142857142857142e+00;

        constexpr double b1 = 5.42937341165687622380535766363e-2;
        constexpr double b6 = 4.45031289275240888144113950566e0;
        constexpr double b7 = 1.89151789931450038304281599044e0;
        constexpr double b8 = -5.8012039600105847814672114227e0;
        constexpr double b9 = 3.1116436695781989440891606237e-1;
        constexpr double b10 = -1.52160949662516078556178806805e-1;
        constexpr double b11 = 2.01365400804030348374776537501e-1;
        constexpr double b12 = 4.47106157277725905176885569043e-2;

        constexpr double a21 = 5.26001519587677318785587544488e-2;
        constexpr double a31 = 1.97250569845378994544595329183e-2;
        constexpr double a32 = 5.91751709536136983633785987549e-2;
        constexpr double a41 = 2.95875854768068491816892993775e-2;
        constexpr double a43 = 8.87627564304205475450678981324e-2;
        constexpr double a51 = 2.41365134159266685502369798665e-1;
        constexpr double a53 = -8.84549479328286085344864962717e-1;
        constexpr double a54 = 9.24834003261792003115737966543e-1;
        constexpr double a61 = 3.7037037037037037037037037037e-2;
        constexpr double a64 = 1.70828608729473871279604482173e-1;
        constexpr double a65 = 1.25467687566822425016691814123e-1;
        constexpr double a71 = 3.7109375e-2;
        constexpr double a74 = 1.70252211019544039314978060272e-1;
        constexpr double a75 = 6.02165389804559606850219397283e-2;
        constexpr double a76 = -1.7578125e-2;
        constexpr double a81 = 3.70920001185047927108779319836e-2;
        constexpr double a84 = 1.70383925712239993810214054705e-1;
        constexpr double a85 = 1.07262030446373284651809199168e-1;
        constexpr double a86 = -1.53194377486244017527936158236e-2;
        constexpr double a87 = 8.27378916381402288758473766002e-3;
        constexpr double a91 = 6.24110958716075717114429577812e-1;
        constexpr double a94 = -3.36089262944694129406857109825e0;
        constexpr double a95 = -8.68219346841726006818189891453e-1;
        constexpr double a96 = 2.75920996994467083049415600797e1;
        constexpr double a97 = 2.01540675504778934086186788979e1;
        constexpr double a98 = -4.34898841810699588477366255144e1;
        constexpr double a101 = 4.77662536438264365890433908527e-1;
        constexpr double a104 = -2.48811461997166764192642586468e0;
        constexpr double a105 = -5.90290826836842996371446475743e-1;
        constexpr double a106 = 2.12300514481811942347288949897e1;
        constexpr double a107 = 1.52792336328824235832596922938e1;
        constexpr double a108 = -3.32882109689848629194453265587e1;
        constexpr double a109 = -2.03312017085086261358222928593e-2;
        constexpr double a111 = -9.3714243008598732571704021658e-1;
        constexpr double a114 = 5.18637242884406370830023853209e0;
        constexpr double a115 = 1.09143734899672957818500254654e0;
        constexpr double a116 = -8.14978701074692612513997267357e0;
        constexpr double a117 = -1.85200656599969598641566180701e1;
        constexpr double a118 = 2.27394870993505042818970056734e1;
        constexpr double a119 = 2.49360555267965238987089396762e0;
        constexpr double a1110 = -3.0467644718982195003823669022e0;
        constexpr double a121 = 2.27331014751653820792359768449e0;
        constexpr double a124 = -1.05344954667372501984066689879e1;
        constexpr double a125 = -2.00087205822486249909675718444e0;
        constexpr double a126 = -1.79589318631187989172765950534e1;
        constexpr double a127 = 2.79488845294199600508499808837e1;
        constexpr double a128 = -2.85899827713502369474065508674e0;
        constexpr double a129 = -8.87285693353062954433549289258e0;
        constexpr double a1210 = 1.23605671757943030647266201528e1;
        constexpr double a1211 = 6.43392746015763530355970484046e-1;

        const Vector& y = y_;
        const Vector& k1 = k1_;
        for (std::size_t i = 0; i < N; ++i) w_[i] = y[i] + h * a21 * k1[i];
        eval(t_ + c2 * h, w_, k2_);
        for (std::size_t i = 0; i < N; ++i) w_[i] = y[i] + h * (a31 * k1[i] + a32 * k2_[i]);
        eval(t_ + c3 * h, w_, k3_);
        for (std::size_t i = 0; i < N; ++i) w_[i] = y[i] + h * (a41 * k1[i] + a43 * k3_[i]);
        eval(t_ + c4 * h, w_, k4_);
        for (std::size_t i = 0; i < N; ++i) w_[i] = y[i] + h * (a51 * k1[i] + a53 * k3_[i] + a54 * k4_[i]);
        eval(t_ + c5 * h, w_, k5_);
        for (std::size_t i = 0; i < N; ++i) w_[i] = y[i] + h * (a61 * k1[i] + a64 * k4_[i] + a65 * k5_[i]);
        eval(t_ + c6 * h, w_, k6_);
        for (std::size_t i = 0; i < N; ++i)
            w_[i] = y[i] + h * (a71 * k1[i] + a74 * k4_[i] + a75 * k5_[i] + a76 * k6_[i]);
        eval(t_ + c7 * h, w_, k7_);
        for (std::size_t i = 0; i < N; ++i)
            w_[i] = y[i] + h * (a81 * k1[i] + a84 * k4_[i] + a85 * k5_[i] + a86 * k6_[i] + a87 * k7_[i]);
        eval(t_ + c8 * h, w_, k8_);
        for (std::size_t i = 0; i < N; ++i)
            w_[i] = y[i] + h * (a91 * k1[i] + a94 * k4_[i] + a95 * k5_[i] + a96 * k6_[i] + a97 * k7_[i] +
                                a98 * k8_[i]);
        eval(t_ + c9 * h, w_, k9_);
        for (std::size_t i = 0; i < N; ++i)
            w_[i] = y[i] + h * (a101 * k1[i] + a104 * k4_[i] + a105 * k5_[i] + a106 * k6_[i] +
                                a107 * k7_[i] + a108 * k8_[i] + a109 * k9_[i]);
        eval(t_ + c10 * h, w_, k10_);
        for (std::size_t i = 0; i < N; ++i)
            w_[i] = y[i] + h * (a111 * k1[i] + a114 * k4_[i] + a115 * k5_[i] + a116 * k6_[i] +
                                a117 * k7_[i] + a118 * k8_[i] + a119 * k9_[i] + a1110 * k10_[i]);
        eval(t_ + c11 * h, w_, k2_);
        for (std::size_t i = 0; i < N; ++i)
            w_[i] = y[i] + h * (a121 * k1[i] + a124 * k4_[i] + a125 * k5_[i] + a126 * k6_[i] +
                                a127 * k7_[i] + a128 * k8_[i] + a129 * k9_[i] + a1210 * k10_[i] +
                                a1211 * k2_[i]);
        eval(t_ + h, w_, k3_);
        for (std::size_t i = 0; i < N; ++i) {
            k4_[i] = b1 * k1[i] + b6 * k6_[i] + b7 * k7_[i] + b8 * k8_[i] + b9 * k9_[i] + b10 * k10_[i] +
                     b11 * k2_[i] + b12 * k3_[i];
            k5_[i] = y[i] + h * k4_[i];
        }
    }

    // Blend of the 5th- and 3rd-order estimators, as in DOP853.
    double error_estimation() const {
        constexpr double bhh1 = 0.244094488188976377952755905512e+00;
        constexpr double bhh2 = 0.733846688281611857341361741547e+00;
        constexpr double bhh3 = 0.220588235294117647058823529412e-01;
        constexpr double er1 = 0.1312004499419488073250102996e-01;
        constexpr double er6 = -0.1225156446376204440720569753e+01;
        constexpr double er7 = -0.4957589496572501915214079952e+00;
        constexpr double er8 = 0.1664377182454986536961530415e+01;
        constexpr double er9 = -0.3503288487499736816886487290e+00;
        constexpr double er10 = 0.3341791187130174790297318841e+00;
        constexpr double er11 = 0.8192320648511571246570742613e-01;
        constexpr double er12 = -0.2235530786388629525884427845e-01;
        double err = 0.0;
        double err2 = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double sk = 1.0 / (atol_ + rtol_ * std::max(std::abs(y_[i]), std::abs(k5_[i])));
            double e = (k4_[i] - bhh1 * k1_[i] - bhh2 * k9_[i] - bhh3 * k3_[i]) * sk;
            err2 += e * e;
            e = (er1 * k1_[i] + er6 * k6_[i] + er7 * k7_[i] + er8 * k8_[i] + er9 * k9_[i] + er10 * k10_[i] +
                 er11 * k2_[i] + er12 * k3_[i]) *
                sk;
            err += e * e;
        }
        const double deno = err + 0.01 * err2;
        return err * std::sqrt(1.0 / (deno <= 0.0 ? double(N) : deno * double(N)));
    }

    // Seventh-order continuous extension on [t_old, t].  Uses the stage
    // buffers of the last accepted step, which stay intact until the next step.
    void prepare_dense() {
        constexpr double c14 = 0.1e+00;
        constexpr double c15 = 0.2e+00;
        constexpr double c16 = 0.777777777777777777777777777778e+00;

        constexpr double a141 = 5.61675022830479523392909219681e-2;
        constexpr double a147 = 2.53500210216624811088794765333e-1;
        constexpr double a148 = -2.46239037470802489917441475441e-1;
        constexpr double a149 = -1.24191423263816360469010140626e-1;
        constexpr double a1410 = 1.5329179827876569731206322685e-1;
        constexpr double a1411 = 8.20105229563468988491666602057e-3;
        constexpr double a1412 = 7.56789766054569976138603589584e-3;
        constexpr double a1413 = -8.298e-3;

        constexpr double a151 = 3.18346481635021405060768473261e-2;
        constexpr double a156 = 2.83009096723667755288322961402e-2;
        constexpr double a157 = 5.35419883074385676223797384372e-2;
        constexpr double a158 = -5.49237485713909884646569340306e-2;
        constexpr double a1511 = -1.08347328697249322858509316994e-4;
        constexpr double a1512 = 3.82571090835658412954920192323e-4;
        constexpr double a1513 = -3.40465008687404560802977114492e-4;
        constexpr double a1514 = 1.41312443674632500278074618366e-1;

        constexpr double a161 = -4.28896301583791923408573538692e-1;
        constexpr double a166 = -4.69762141536116384314449447206e0;
        constexpr double a167 = 7.68342119606259904184240953878e0;
        constexpr double a168 = 4.06898981839711007970213554331e0;
        constexpr double a169 = 3.56727187455281109270669543021e-1;
        constexpr double a1613 = -1.39902416515901462129418009734e-3;
        constexpr double a1614 = 2.9475147891527723389556272149e0;
        constexpr double a1615 = -9.15095847217987001081870187138e0;

        constexpr double d41 = -0.84289382761090128651353491142e+01;
        constexpr double d46 = 0.56671495351937776962531783590e+00;
        constexpr double d47 = -0.30689499459498916912797304727e+01;
        constexpr double d48 = 0.23846676565120698287728149680e+01;
        constexpr double d49 = 0.21170345824450282767155149946e+01;
        constexpr double d410 = -0.87139158377797299206789907490e+00;
        constexpr double d411 = 0.22404374302607882758541771650e+01;
        constexpr double d412 = 0.63157877876946881815570249290e+00;
        constexpr double d413 = -0.88990336451333310820698117400e-01;
        constexpr double d414 = 0.18148505520854727256656404962e+02;
        constexpr double d415 = -0.91946323924783554000451984436e+01;
        constexpr double d416 = -0.44360363875948939664310572000e+01;

        constexpr double d51 = 0.10427508642579134603413151009e+02;
        constexpr double d56 = 0.24228349177525818288430175319e+03;
        constexpr double d57 = 0.16520045171727028198505394887e+03;
        constexpr double d58 = -0.37454675472269020279518312152e+03;
        constexpr double d59 = -0.22113666853125306036270938578e+02;
        constexpr double d510 = 0.77334326684722638389603898808e+01;
        constexpr double d511 = -0.30674084731089398182061213626e+02;
        constexpr double d512 = -0.93321305264302278729567221706e+01;
        constexpr double d513 = 0.15697238121770843886131091075e+02;
        constexpr double d514 = -0.31139403219565177677282850411e+02;
        constexpr double d515 = -0.93529243588444783865713862664e+01;
        constexpr double d516 = 0.35816841486394083752465898540e+02;

        constexpr double d61 = 0.19985053242002433820987653617e+02;
        constexpr double d66 = -0.38703730874935176555105901742e+03;
        constexpr double d67 = -0.18917813819516756882830838328e+03;
        constexpr double d68 = 0.52780815920542364900561016686e+03;
        constexpr double d69 = -0.11573902539959630126141871134e+02;
        constexpr double d610 = 0.68812326946963000169666922661e+01;
        constexpr double d611 = -0.10006050966910838403183860980e+01;
        constexpr double d612 = 0.77771377980534432092869265740e+00;
        constexpr double d613 = -0.27782057523535084065932004339e+01;
        constexpr double d614 = -0.60196695231264120758267380846e+02;
        constexpr double d615 = 0.84320405506677161018159903784e+02;
        constexpr double d616 = 0.11992291136182789328035130030e+02;

        constexpr double d71 = -0.25693933462703749003312586129e+02;
        constexpr double d76 = -0.15418974869023643374053993627e+03;
        constexpr double d77 = -0.23152937917604549567536039109e+03;
        constexpr double d78 = 0.35763911791061412378285349910e+03;
        constexpr double d79 = 0.93405324183624310003907691704e+02;
        constexpr double d710 = -0.37458323136451633156875139351e+02;
        constexpr double d711 = 0.10409964950896230045147246184e+03;
        constexpr double d712 = 0.29840293426660503123344363579e+02;
        constexpr double d713 = -0.43533456590011143754432175058e+02;
        constexpr double d714 = 0.96324553959188282948394950600e+02;
        constexpr double d715 = -0.39177261675615439165231486172e+02;
        constexpr double d716 = -0.14972683625798562581422125276e+03;

        const double h = h_step_;
        const Vector& y0 = y_old_;
        const Vector& k1 = k1_old_;
        // k4_ now holds f(t, y) at the end of the step, k5_ the new state.
        for (std::size_t i = 0; i < N; ++i) {
            rc_[0][i] = y0[i];
            const double ydiff = k5_[i] - y0[i];
            rc_[1][i] = ydiff;
            const double bspl = h * k1[i] - ydiff;
            rc_[2][i] = bspl;
            rc_[3][i] = ydiff - h * k4_[i] - bspl;
            rc_[4][i] = d41 * k1[i] + d46 * k6_[i] + d47 * k7_[i] + d48 * k8_[i] + d49 * k9_[i] +
                        d410 * k10_[i] + d411 * k2_[i] + d412 * k3_[i];
            rc_[5][i] = d51 * k1[i] + d56 * k6_[i] + d57 * k7_[i] + d58 * k8_[i] + d59 * k9_[i] +
                        d510 * k10_[i] + d511 * k2_[i] + d512 * k3_[i];
            rc_[6][i] = d61 * k1[i] + d66 * k6_[i] + d67 * k7_[i] + d68 * k8_[i] + d69 * k9_[i] +
                        d610 * k10_[i] + d611 * k2_[i] + d612 * k3_[i];
            rc_[7][i] = d71 * k1[i] + d76 * k6_[i] + d77 * k7_[i] + d78 * k8_[i] + d79 * k9_[i] +
                        d710 * k10_[i] + d711 * k2_[i] + d712 * k3_[i];
        }
        const double t0 = t_old_;
        for (std::size_t i = 0; i < N; ++i)
            w_[i] = y0[i] + h * (a141 * k1[i] + a147 * k7_[i] + a148 * k8_[i] + a149 * k9_[i] +
                                 a1410 * k10_[i] + a1411 * k2_[i] + a1412 * k3_[i] + a1413 * k4_[i]);
        eval(t0 + c14 * h, w_, k10_);
        for (std::size_t i = 0; i < N; ++i)
            w_[i] = y0[i] + h * (a151 * k1[i] + a156 * k6_[i] + a157 * k7_[i] + a158 * k8_[i] +
                                 a1511 * k2_[i] + a1512 * k3_[i] + a1513 * k4_[i] + a1514 * k10_[i]);
        eval(t0 + c15 * h, w_, k2_);
        for (std::size_t i = 0; i < N; ++i)
            w_[i] = y0[i] + h * (a161 * k1[i] + a166 * k6_[i] + a167 * k7_[i] + a168 * k8_[i] +
                                 a169 * k9_[i] + a1613 * k4_[i] + a1614 * k10_[i] + a1615 * k2_[i]);
        eval(t0 + c16 * h, w_, k3_);
        for (std::size_t i = 0; i < N; ++i) {
            rc_[4][i] = h * (rc_[4][i] + d413 * k4_[i] + d414 * k10_[i] + d415 * k2_[i] + d416 * k3_[i]);
            rc_[5][i] = h * (rc_[5][i] + d513 * k4_[i] + d514 * k10_[i] + d515 * k2_[i] + d516 * k3_[i]);
            rc_[6][i] = h * (rc_[6][i] + d613 * k4_[i] + d614 * k10_[i] + d615 * k2_[i] + d616 * k3_[i]);
            rc_[7][i] = h * (rc_[7][i] + d713 * k4_[i] + d714 * k10_[i] + d715 * k2_[i] + d716 * k3_[i]);
        }
        dense_ready_ = true;
    }

    F f_;
    double rtol_;
    double atol_;
    double hmax_;

    double t_ = 0.0;
    double t_old_ = 0.0;
    double h_ = 0.0;
    double h_step_ = 0.0;
    double facold_ = 1e-4;
    bool reject_ = false;
    bool has_step_ = false;
    bool dense_ready_ = false;

    Vector y_{}, y_old_{}, w_{};
    Vector k1_{}, k1_old_{}, k2_{}, k3_{}, k4_{}, k5_{}, k6_{}, k7_{}, k8_{}, k9_{}, k10_{};
    std::array<Vector, 8> rc_{};

    std::uint64_t accepted_ = 0;
    std::uint64_t rejected_ = 0;
    std::uint64_t nfev_ = 0;
};

template <std::size_t N, class F>
Dop853<N, F> make_dop853(F f, const IntegratorConfig& cfg) {
    return Dop853<N, F>(std::move(f), cfg.rel_tol, cfg.abs_tol, cfg.max_step);
}

namespace detail {

inline double relative_drift(double value, double reference) noexcept {
    return std::abs(value - reference) / std::max(std::abs(reference), std::numeric_limits<double>::min());
}

// Adapters between the flat vectors the stepper sees and the public state types.
struct FullSystem {
    using State = PhaseState;
    static constexpr std::size_t dim = 5;
    static Vec<5> pack(const PhaseState& s) { return s.to_array(); }
    static PhaseState unpack(const Vec<5>& y) { return PhaseState::from_array(y); }
    static double energy(const ModelParams& m, const PhaseState& s) { return hamiltonian(m, s); }
    static void rhs(const ModelParams& m, const Vec<5>& y, Vec<5>& dy) {
        dy = eom_rhs(m, PhaseState::from_array(y)).to_array();
    }
};

struct ReducedSystem {
    using State = SpinVector;
    static constexpr std::size_t dim = 3;
    static Vec<3> pack(const SpinVector& s) { return {s.sx, s.sy, s.sz}; }
    static SpinVector unpack(const Vec<3>& y) { return {y[0], y[1], y[2]}; }
    static double energy(const ModelParams& m, const SpinVector& s) { return reduced_energy(m, s); }
    static void rhs(const ModelParams& m, const Vec<3>& y, Vec<3>& dy) {
        const auto d = reduced_eom_rhs(m, {y[0], y[1], y[2]});
        dy = {d.sx, d.sy, d.sz};
    }
};

/// Rescales the spin block (the first three entries) to length s.
/// Returns the magnitude of the applied correction.
template <std::size_t N>
double renormalize_spin_block(Vec<N>& y, double s) {
    const double n = std::hypot(y[0], y[1], y[2]);
    if (!(n > 0.0)) return 0.0;
    const double scale = s / n;
    for (int i = 0; i < 3; ++i) y[i] *= scale;
    return std::abs(n - s);
}

template <class Sys>
class Monitor {
public:
    Monitor(const ModelParams& m, const typename Sys::State& s0)
        : m_(m), e0_(Sys::energy(m, s0)), n0_(spin_norm(s0)) {}

    void observe(const typename Sys::State& s, IntegrationStats& st) const {
        st.max_energy_drift = std::max(st.max_energy_drift, relative_drift(Sys::energy(m_, s), e0_));
        st.max_spin_drift = std::max(st.max_spin_drift, relative_drift(spin_norm(s), n0_));
    }

private:
    const ModelParams& m_;
    double e0_;
    double n0_;
};

template <class Sys>
BasicTrajectory<typename Sys::State> integrate_system(const ModelParams& m, const typename Sys::State& s0,
                                                      const IntegratorConfig& cfg) {
    using State = typename Sys::State;
    constexpr std::size_t n = Sys::dim;
    m.validate();
    cfg.validate();

    BasicTrajectory<State> traj;
    const Monitor<Sys> monitor(m, s0);
    auto rhs = [&m](double, const Vec<n>& y, Vec<n>& dy) { Sys::rhs(m, y, dy); };
    auto stepper = make_dop853<n>(rhs, cfg);
    Vec<n> y0 = Sys::pack(s0);
    stepper.reset(0.0, y0);

    traj.times.push_back(0.0);
    traj.states.push_back(s0);

    const double t_end = cfg.t_end;
    const double min_step = 1e-14 * t_end;
    std::uint64_t next = 1;
    auto sample_time = [&](std::uint64_t k) { return static_cast<double>(k) * cfg.sample_dt; };

    auto finish_stats = [&] {
        traj.stats.accepted_steps = stepper.accepted();
        traj.stats.rejected_steps = stepper.rejected();
        traj.stats.rhs_evaluations = stepper.evaluations();
    };

    while (stepper.time() < t_end) {
        if (!stepper.step(t_end, min_step)) {
            finish_stats();
            throw BasicStiffnessError<State>(
                "integrate: step size fell below 1e-14 t_end at t = " + std::to_string(stepper.time()),
                std::move(traj));
        }
        const double t = stepper.time();
        while (next < std::numeric_limits<std::uint64_t>::max() && sample_time(next) < t &&
               sample_time(next) < t_end) {
            Vec<n> y = stepper.dense(sample_time(next));
            if (cfg.renormalize_spin) renormalize_spin_block(y, m.spin_s);
            const State s = Sys::unpack(y);
            monitor.observe(s, traj.stats);
            traj.times.push_back(sample_time(next));
            traj.states.push_back(s);
            ++next;
        }
        Vec<n> y = stepper.state();
        if (cfg.renormalize_spin) {
            const double corr = renormalize_spin_block(y, m.spin_s);
            traj.stats.renorm_correction_total += corr;
            traj.stats.renorm_correction_max = std::max(traj.stats.renorm_correction_max, corr);
            stepper.reset_state(y);
        }
        monitor.observe(Sys::unpack(y), traj.stats);
        if (t >= t_end) {
            // Sample grid points that coincide with t_end land here.
            if (traj.times.back() < t_end) {
                traj.times.push_back(t_end);
                traj.states.push_back(Sys::unpack(y));
            }
        }
    }
    finish_stats();
    return traj;
}

}  // namespace detail

/// Integrates the full five-dimensional flow, sampling at n * sample_dt and at t_end.
inline Trajectory integrate(const ModelParams& m, const PhaseState& state0, const IntegratorConfig& cfg) {
    return detail::integrate_system<detail::FullSystem>(m, state0, cfg);
}

/// Integrates the slaved spin flow.
inline SpinTrajectory integrate_reduced(const ModelParams& m, const SpinVector& spin0,
                                        const IntegratorConfig& cfg) {
    return detail::integrate_system<detail::ReducedSystem>(m, spin0, cfg);
}

struct ConservationReport {
    double energy_drift = 0.0;  ///< max |H(t) - H(0)| / |H(0)|
    double spin_drift = 0.0;    ///< max ||S(t)| - |S(0)|| / |S(0)|
};

namespace detail {

template <class State, class Energy>
ConservationReport conservation_report_impl(const BasicTrajectory<State>& traj, Energy energy) {
    if (traj.empty()) throw ValidationError("conservation_report: empty trajectory");
    const double e0 = energy(traj.states.front());
    const double n0 = spin_norm(traj.states.front());
    ConservationReport r;
    for (const auto& s : traj.states) {
        r.energy_drift = std::max(r.energy_drift, e0 == energy(s) ? 0.0 : relative_drift(energy(s), e0));
        r.spin_drift = std::max(r.spin_drift, n0 == spin_norm(s) ? 0.0 : relative_drift(spin_norm(s), n0));
    }
    return r;
}

}  // namespace detail

/// Drifts of H and |S| over the samples, relative to the first sample.
inline ConservationReport conservation_report(const ModelParams& m, const Trajectory& traj) {
    return detail::conservation_report_impl(traj, [&m](const PhaseState& s) { return hamiltonian(m, s); });
}

/// Same for a slaved trajectory, using the reduced energy.
inline ConservationReport conservation_report(const ModelParams& m, const SpinTrajectory& traj) {
    return detail::conservation_report_impl(traj, [&m](const SpinVector& s) { return reduced_energy(m, s); });
}

enum class CrossingDirection { up, down, both };

struct Crossing {
    double t = 0.0;
    PhaseState state;
};

struct CrossingSet {
    std::vector<Crossing> crossings;
    IntegrationStats stats;
};

inline constexpr double kCrossingTolerance = 1e-10;

namespace detail {

/// Bisection on the dense interpolant for a root of component `index`
/// bracketed by [ta, tb].  Stops once |value| < tol * max(1, |state|).
template <std::size_t N, class Stepper>
std::pair<double, Vec<N>> refine_root(Stepper& st, std::size_t index, double ta, double tb) {
    Vec<N> ya = st.dense(ta);
    Vec<N> ym = ya;
    double tm = ta;
    for (int it = 0; it < 200; ++it) {
        tm = 0.5 * (ta + tb);
        ym = st.dense(tm);
        double norm = 0.0;
        for (double v : ym) norm = std::max(norm, std::abs(v));
        if (std::abs(ym[index]) < kCrossingTolerance * std::max(1.0, norm) || tb - ta <= 4e-16 * std::abs(tm)) {
            break;
        }
        if ((ym[index] < 0.0) == (ya[index] < 0.0)) {
            ta = tm;
            ya = ym;
        } else {
            tb = tm;
        }
    }
    return {tm, ym};
}

}  // namespace detail

/// Crossings of q = 0 along the full flow up to config.t_end, at most max_count.
/// `up` keeps crossings with dq/dt > 0.
inline CrossingSet find_crossings(const ModelParams& m, const PhaseState& state0, const IntegratorConfig& cfg,
                                  CrossingDirection direction = CrossingDirection::up,
                                  std::size_t max_count = std::numeric_limits<std::size_t>::max()) {
    m.validate();
    cfg.validate();
    CrossingSet out;
    const detail::Monitor<detail::FullSystem> monitor(m, state0);
    auto rhs = [&m](double, const Vec<5>& y, Vec<5>& dy) { detail::FullSystem::rhs(m, y, dy); };
    auto stepper = make_dop853<5>(rhs, cfg);
    stepper.reset(0.0, state0.to_array());
    const double min_step = 1e-14 * cfg.t_end;
    constexpr std::size_t q = 4;

    auto finish_stats = [&] {
        out.stats.accepted_steps = stepper.accepted();
        out.stats.rejected_steps = stepper.rejected();
        out.stats.rhs_evaluations = stepper.evaluations();
    };

    while (stepper.time() < cfg.t_end && out.crossings.size() < max_count) {
        if (!stepper.step(cfg.t_end, min_step)) {
            finish_stats();
            throw ComputationError("find_crossings: step size fell below 1e-14 t_end at t = " +
                                   std::to_string(stepper.time()));
        }
        const double q0 = stepper.previous_state()[q];
        Vec<5> y = stepper.state();
        const double q1 = y[q];
        const bool up = q0 < 0.0 && q1 >= 0.0;
        const bool down = q0 > 0.0 && q1 <= 0.0;
        const bool wanted = (up && direction != CrossingDirection::down) ||
                            (down && direction != CrossingDirection::up);
        if (wanted) {
            auto [tc, yc] = detail::refine_root<5>(stepper, q, stepper.previous_time(), stepper.time());
            if (cfg.renormalize_spin) detail::renormalize_spin_block(yc, m.spin_s);
            out.crossings.push_back({tc, PhaseState::from_array(yc)});
        }
        if (cfg.renormalize_spin) {
            const double corr = detail::renormalize_spin_block(y, m.spin_s);
            out.stats.renorm_correction_total += corr;
            out.stats.renorm_correction_max = std::max(out.stats.renorm_correction_max, corr);
            stepper.reset_state(y);
        }
        monitor.observe(PhaseState::from_array(y), out.stats);
    }
    finish_stats();
    return out;
}

}  // namespace dicke
