#include "stoptree/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stoptree {

namespace {

double dot_n(std::span<const double> a, std::span<const double> b) {
    long double acc = 0.0L;
    for (size_t i = 0; i < a.size(); ++i) acc += static_cast<long double>(a[i]) * b[i];
    return static_cast<double>(acc / static_cast<long double>(a.size()));
}

double diff_norm_sq_n(std::span<const double> a, std::span<const double> b) {
    long double acc = 0.0L;
    for (size_t i = 0; i < a.size(); ++i) {
        const long double d = static_cast<long double>(a[i]) - b[i];
        acc += d * d;
    }
    return static_cast<double>(acc / static_cast<long double>(a.size()));
}

} // namespace

FlowDiagnostics::FlowDiagnostics(const FlowTrace& trace, const SimTruth& truth)
    : trace_(&trace), truth_(&truth) {
    const int steps = static_cast<int>(trace.steps.size());
    const int n = trace.n;
    if (static_cast<int>(truth.f_values.size()) != n || static_cast<int>(truth.eps.size()) != n)
        throw std::invalid_argument("FlowDiagnostics: truth length mismatch");

    f_norm_sq = empirical_norm_sq(truth.f_values);
    eps_norm_sq = empirical_norm_sq(truth.eps);

    a_sq.assign(steps, 0.0);
    s_sq.assign(steps, 0.0);
    pf_dot_e.assign(steps, 0.0);
    seg_cross.assign(std::max(0, steps - 1), 0.0);

    a_sq[0] = f_norm_sq;
    s_sq[0] = 0.0;
    pf_dot_e[0] = 0.0;

    std::vector<double> prev_pe(n, 0.0);
    for (int s = 1; s < steps; ++s) {
        const TreeStage st{trace.tree.get(), s};
        const std::vector<double> pf = apply_projection(st, truth.f_values);
        const std::vector<double> pe = apply_projection(st, truth.eps);
        a_sq[s] = diff_norm_sq_n(truth.f_values, pf);
        s_sq[s] = empirical_norm_sq(pe);
        pf_dot_e[s] = dot_n(pf, truth.eps);
        long double cx = 0.0L;
        for (int i = 0; i < n; ++i)
            cx += (static_cast<long double>(pe[i]) - prev_pe[i]) * truth.f_values[i];
        seg_cross[s - 1] = static_cast<double>(cx / n);
        prev_pe = pe;
    }
}

ErrorDecomposition FlowDiagnostics::at(double t) const {
    const auto [g, alpha] = locate(*trace_, t);
    ErrorDecomposition d;
    d.t = t;
    if (alpha == 0.0) {
        d.approx_sq = a_sq[g];
        d.stoch_sq = s_sq[g];
        d.cross = 0.0; // orthogonal projection at a generation point
    } else {
        const double w = 1.0 - alpha;
        d.approx_sq = a_sq[g + 1] + w * w * (a_sq[g] - a_sq[g + 1]);
        d.stoch_sq = s_sq[g] + alpha * alpha * (s_sq[g + 1] - s_sq[g]);
        d.cross = alpha * w * seg_cross[g];
    }
    const std::vector<double> fit = fitted(t);
    d.loss = diff_norm_sq_n(fit, truth_->f_values);
    return d;
}

std::vector<double> FlowDiagnostics::fitted(double t) const {
    const auto [g, alpha] = locate(*trace_, t);
    if (alpha == 0.0) return fitted_at(*trace_, g, g, 0.0);
    return fitted_at(*trace_, g, g + 1, alpha);
}

double FlowDiagnostics::balanced_oracle() const {
    const int steps = static_cast<int>(trace_->steps.size());
    int hit = -1;
    for (int s = 0; s < steps; ++s) {
        if (a_sq[s] <= s_sq[s]) {
            hit = s;
            break;
        }
    }
    if (hit == 0) return 0.0;
    if (hit < 0) return trace_->steps.back().k; // no crossing inside the trace

    const double k0 = trace_->step(hit - 1).k;
    const double k1 = trace_->step(hit).k;
    const double a_k = a_sq[hit - 1], a_l = a_sq[hit];
    const double s_k = s_sq[hit - 1], s_l = s_sq[hit];
    auto balance = [&](double alpha) {
        const double w = 1.0 - alpha;
        const double a = a_l + w * w * (a_k - a_l);
        const double s = s_k + alpha * alpha * (s_l - s_k);
        return a - s;
    };
    double lo = 0.0, hi = 1.0; // balance(lo) > 0 >= balance(hi)
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (balance(mid) > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    const double alpha = 0.5 * (lo + hi);
    return k0 + alpha * (k1 - k0);
}

LedgerEntry FlowDiagnostics::check_distance_inequality(double kappa) const {
    const StopReport tau_rep = interpolated_stop(*trace_, kappa);
    const double tau_b = balanced_oracle();

    const std::vector<double> fit_tau =
        tau_rep.cause == StopCause::pre_root
            ? std::vector<double>(trace_->n, 0.0)
            : fitted_at(*trace_, tau_rep.step_k, tau_rep.step_l, tau_rep.alpha);
    const std::vector<double> fit_tb = fitted(tau_b);
    const double lhs = diff_norm_sq_n(fit_tau, fit_tb);

    const auto [g, alpha] = locate(*trace_, tau_b);
    const double w = 1.0 - alpha;
    const double early = std::abs(kappa - eps_norm_sq);
    // <(Pi - Pi^2) eps, eps> = alpha(1-alpha)(s_l^2 - s_k^2) on the segment
    const double interp =
        alpha == 0.0 ? 0.0 : 2.0 * alpha * w * (s_sq[g + 1] - s_sq[g]);
    // <(Id - Pi)^2 f, eps> with (Id-Pi)^2 = w^2 (Id-Pi_k) + (1-w^2)(Id-Pi_l)
    double fdot = dot_n(truth_->f_values, truth_->eps);
    double proj_part;
    if (alpha == 0.0)
        proj_part = pf_dot_e[g];
    else
        proj_part = w * w * pf_dot_e[g] + (1.0 - w * w) * pf_dot_e[g + 1];
    const double cross = 2.0 * std::abs(fdot - proj_part);

    LedgerEntry e;
    e.name = "distance_to_balanced_oracle";
    e.lhs = lhs;
    e.rhs = early + interp + cross;
    e.slack = e.rhs - e.lhs;
    const double scale = std::max({1.0, e.lhs, e.rhs});
    e.pass = lhs <= e.rhs + 1e-9 * scale;
    return e;
}

LedgerEntry FlowDiagnostics::check_oracle_factor4() const {
    const double tau_b = balanced_oracle();
    const std::vector<double> fit_tb = fitted(tau_b);
    const double lhs = diff_norm_sq_n(fit_tb, truth_->f_values);

    // all generation points plus 16 interior positions per segment
    double best = a_sq[0] + s_sq[0];
    const int steps = static_cast<int>(trace_->steps.size());
    for (int s = 0; s < steps; ++s) best = std::min(best, a_sq[s] + s_sq[s]);
    for (int s = 0; s + 1 < steps; ++s) {
        const double a_k = a_sq[s], a_l = a_sq[s + 1];
        const double s_k = s_sq[s], s_l = s_sq[s + 1];
        for (int i = 1; i <= 16; ++i) {
            const double alpha = static_cast<double>(i) / 17.0;
            const double w = 1.0 - alpha;
            const double v = a_l + w * w * (a_k - a_l) + s_k + alpha * alpha * (s_l - s_k);
            best = std::min(best, v);
        }
    }

    LedgerEntry e;
    e.name = "balanced_oracle_factor4";
    e.lhs = lhs;
    e.rhs = 4.0 * best;
    e.slack = e.rhs - e.lhs;
    const double scale = std::max({1.0, e.lhs, e.rhs});
    e.pass = lhs <= e.rhs + 1e-9 * scale;
    return e;
}

ErrorDecomposition error_decomposition(const FlowTrace& trace, const SimTruth& truth, double t) {
    return FlowDiagnostics(trace, truth).at(t);
}
double balanced_oracle(const FlowTrace& trace, const SimTruth& truth) {
    return FlowDiagnostics(trace, truth).balanced_oracle();
}
LedgerEntry check_distance_inequality(const FlowTrace& trace, const SimTruth& truth, double kappa) {
    return FlowDiagnostics(trace, truth).check_distance_inequality(kappa);
}
LedgerEntry check_oracle_factor4(const FlowTrace& trace, const SimTruth& truth) {
    return FlowDiagnostics(trace, truth).check_oracle_factor4();
}

// ---- test-set error paths ---------------------------------------------------

TestFlowErrors test_flow_errors(const FlowTrace& trace, const Dataset& eval,
                                std::span<const double> target) {
    if (static_cast<size_t>(eval.n) != target.size())
        throw std::invalid_argument("test_flow_errors: target length mismatch");
    const int steps = static_cast<int>(trace.steps.size());
    TestFlowErrors out;
    out.n_eval = eval.n;
    out.sse.assign(steps, 0.0);
    out.seg_dot.assign(std::max(0, steps - 1), 0.0);
    out.k.resize(steps);
    for (int s = 0; s < steps; ++s) out.k[s] = trace.step(s).k;

    long double sse0 = 0.0L;
    for (int r = 0; r < eval.n; ++r) sse0 += static_cast<long double>(target[r]) * target[r];
    out.sse[0] = static_cast<double>(sse0);
    if (steps == 1) return out;

    const Tree& t = *trace.tree;
    // point lists per node; points sink as their nodes split
    std::vector<std::vector<int>> members(t.node_count());
    std::vector<double> pred(eval.n, 0.0);
    members[0].reserve(eval.n);
    for (int r = 0; r < eval.n; ++r) members[0].push_back(r);

    // step 1: everything moves from the zero fit to the root mean
    {
        const double m = t.node(0).mean;
        long double sse = 0.0L, cross = 0.0L;
        for (int r = 0; r < eval.n; ++r) {
            const long double d_new = m - target[r];
            cross += (0.0L - target[r]) * d_new;
            sse += d_new * d_new;
            pred[r] = m;
        }
        out.sse[1] = static_cast<double>(sse);
        out.seg_dot[0] = static_cast<double>(cross);
    }

    long double sse_run = out.sse[1];
    for (int s = 2; s < steps; ++s) {
        long double cross = sse_run; // unchanged points contribute (old-y)^2
        for (int v : trace.step(s).split_nodes) {
            const TreeNode& nd = t.node(v);
            auto& pts = members[v];
            for (int r : pts) {
                const double x = eval.xat(r, nd.feature);
                const int child = x < nd.threshold ? nd.left : nd.right;
                members[child].push_back(r);
                const double m = t.node(child).mean;
                const long double d_old = static_cast<long double>(pred[r]) - target[r];
                const long double d_new = static_cast<long double>(m) - target[r];
                cross += d_old * (d_new - d_old);
                sse_run += d_new * d_new - d_old * d_old;
                pred[r] = m;
            }
            pts.clear();
            pts.shrink_to_fit();
        }
        out.sse[s] = static_cast<double>(sse_run);
        out.seg_dot[s - 1] = static_cast<double>(cross);
    }
    return out;
}

double TestFlowErrors::min_over_generations(int* arg_step) const {
    int best = 0;
    for (size_t s = 1; s < sse.size(); ++s)
        if (sse[s] < sse[best]) best = static_cast<int>(s);
    if (arg_step) *arg_step = best;
    return sse[best];
}

double TestFlowErrors::min_over_flow(double* arg_t) const {
    double best = sse[0];
    double best_t = k[0];
    for (size_t s = 0; s + 1 < sse.size(); ++s) {
        const double A = sse[s], C = sse[s + 1], B = seg_dot[s];
        const double denom = A - 2.0 * B + C; // ||pred_{g+1} - pred_g||^2 >= 0
        double alpha = 0.0;
        if (denom > 0.0) alpha = std::clamp((A - B) / denom, 0.0, 1.0);
        const double w = 1.0 - alpha;
        const double val = w * w * A + 2.0 * alpha * w * B + alpha * alpha * C;
        const double cand_t = k[s] + alpha * (k[s + 1] - k[s]);
        if (val < best) {
            best = val;
            best_t = cand_t;
        }
    }
    // endpoints are alpha in {0,1}; the last generation still needs a look
    if (!sse.empty() && sse.back() < best) {
        best = sse.back();
        best_t = k.back();
    }
    if (arg_t) *arg_t = best_t;
    return best;
}

EfficiencyRecord make_efficiency(std::string method, double oracle_sse, double achieved_sse,
                                 int n_eval, double oracle_index, double oracle_leaves) {
    EfficiencyRecord rec;
    rec.method = std::move(method);
    rec.oracle_rmse = std::sqrt(std::max(0.0, oracle_sse) / n_eval);
    rec.achieved_rmse = std::sqrt(std::max(0.0, achieved_sse) / n_eval);
    rec.efficiency = rec.achieved_rmse > 0.0 ? rec.oracle_rmse / rec.achieved_rmse : 1.0;
    rec.oracle_index = oracle_index;
    rec.oracle_leaves = oracle_leaves;
    return rec;
}

} // namespace stoptree
