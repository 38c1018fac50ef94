#include "stoptree/growth.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <queue>
#include <stdexcept>

namespace stoptree {

std::string to_string(StopCause c) {
    switch (c) {
        case StopCause::threshold: return "threshold";
        case StopCause::pre_root: return "pre_root";
        case StopCause::exhausted: return "exhausted";
        case StopCause::capped: return "capped";
    }
    return "?";
}

std::string to_string(GrowthMode m) {
    switch (m) {
        case GrowthMode::global: return "global";
        case GrowthMode::global_interpolated: return "global-int";
        case GrowthMode::semi_global: return "semi";
        case GrowthMode::semi_global_interpolated: return "semi-int";
    }
    return "?";
}

namespace {

bool is_semi(GrowthMode m) {
    return m == GrowthMode::semi_global || m == GrowthMode::semi_global_interpolated;
}
bool is_interpolated(GrowthMode m) {
    return m == GrowthMode::global_interpolated || m == GrowthMode::semi_global_interpolated;
}

// gain passes the growth rules
bool growable(const StoppingConfig& cfg, double gain) {
    if (gain < cfg.min_gain) return false;
    if (!cfg.allow_zero_gain_splits && !(gain > 0.0)) return false;
    return true;
}

struct HeapEntry {
    double priority;
    int id;
    bool operator<(const HeapEntry& o) const {
        if (priority != o.priority) return priority < o.priority;
        return id > o.id; // ties go to the lowest node id
    }
};

} // namespace

GrowResult grow(const Dataset& ds, const StoppingConfig& cfg) {
    if (ds.n < 1) throw std::invalid_argument("grow: empty dataset");
    if (!(cfg.max_generations >= 1) || !(cfg.max_leaves >= 1))
        throw std::invalid_argument("grow: caps must be >= 1");
    if (!std::isfinite(cfg.kappa)) throw std::invalid_argument("grow: kappa must be finite");

    const auto t0 = std::chrono::steady_clock::now();

    FlowTrace trace;
    trace.mode = cfg.mode;
    trace.n = ds.n;
    trace.kappa = cfg.kappa;
    trace.y_norm_sq = empirical_norm_sq(ds.y);

    trace.steps.push_back({0, trace.y_norm_sq, {}});
    int steps_after_stop = 0;
    bool stopped = false;
    StopCause end_cause = StopCause::exhausted;

    auto note_residual = [&](double r) {
        if (!stopped && r <= cfg.kappa) {
            stopped = true;
            trace.stop_step = trace.last();
        }
    };
    note_residual(trace.y_norm_sq);

    std::shared_ptr<Tree> tree;
    std::priority_queue<HeapEntry> heap; // semi-global priority
    const bool semi = is_semi(cfg.mode);

    auto push_if_growable = [&](int id) {
        const SplitCandidate* best = tree->cached_best_split(id);
        if (best == nullptr) return;
        const double g = best->gain;
        if (!growable(cfg, g)) return;
        const double prio =
            cfg.weighted_priority ? g * tree->node(id).count() / static_cast<double>(ds.n) : g;
        heap.push({prio, id});
    };

    for (;;) {
        if (stopped) {
            if (!cfg.continue_after_stop && steps_after_stop >= cfg.extra_steps_after_stop) {
                end_cause = StopCause::threshold;
                break;
            }
        }
        const int next_step = trace.last() + 1;
        if (next_step > cfg.max_generations ||
            (tree && tree->leaf_count() >= cfg.max_leaves)) {
            end_cause = StopCause::capped;
            break;
        }

        if (!tree) {
            // first transition: create the root-only partition
            tree = std::make_shared<Tree>(ds);
            trace.steps.push_back({1, tree->residual_now(), {}});
            if (semi) push_if_growable(0);
        } else if (semi) {
            int chosen = -1;
            while (!heap.empty()) {
                const HeapEntry top = heap.top();
                heap.pop();
                chosen = top.id;
                break;
            }
            if (chosen < 0) {
                end_cause = StopCause::exhausted;
                break;
            }
            const SplitCandidate cand = *tree->cached_best_split(chosen);
            tree->split_node(chosen, cand, next_step);
            push_if_growable(tree->node(chosen).left);
            push_if_growable(tree->node(chosen).right);
            trace.steps.push_back({tree->leaf_count(), tree->residual_now(), {chosen}});
        } else {
            // global: split every splittable terminal of this generation once
            std::vector<std::pair<int, SplitCandidate>> jobs;
            for (int id : tree->terminal_ids()) {
                const SplitCandidate* best = tree->cached_best_split(id);
                if (best != nullptr && growable(cfg, best->gain)) jobs.emplace_back(id, *best);
            }
            if (jobs.empty()) {
                end_cause = StopCause::exhausted;
                break;
            }
            std::vector<int> events;
            events.reserve(jobs.size());
            for (const auto& [id, cand] : jobs) {
                tree->split_node(id, cand, next_step);
                events.push_back(id);
            }
            trace.steps.push_back({tree->leaf_count(), tree->residual_now(), std::move(events)});
        }

        note_residual(trace.steps.back().residual);
        if (stopped && trace.stop_step < trace.last()) ++steps_after_stop;
    }

    trace.tree = tree;
    if (!stopped) trace.cause = end_cause;
    else trace.cause = trace.stop_step == 0 ? StopCause::pre_root : StopCause::threshold;

    GrowResult out;
    out.trace = std::move(trace);
    out.report = is_interpolated(cfg.mode) ? interpolated_stop(out.trace, cfg.kappa)
                                           : [&] {
          StopReport rep;
          rep.kappa = cfg.kappa;
          const FlowTrace& tr = out.trace;
          const int s = tr.stop_step >= 0 ? tr.stop_step : tr.last();
          rep.step_k = rep.step_l = s;
          rep.tau = rep.k_at_stop = tr.step(s).k;
          rep.residual_at_stop = tr.step(s).residual;
          rep.cause = tr.stop_step >= 0
                          ? (tr.stop_step == 0 ? StopCause::pre_root : StopCause::threshold)
                          : tr.cause;
          rep.fitted = s == 0 ? std::vector<double>(ds.n, 0.0)
                              : fit_values({tr.tree.get(), s});
          return rep;
      }();
    out.report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

GrowResult grow_global(const Dataset& ds, const StoppingConfig& cfg) {
    StoppingConfig c = cfg;
    if (c.mode != GrowthMode::global && c.mode != GrowthMode::global_interpolated)
        c.mode = GrowthMode::global;
    return grow(ds, c);
}

GrowResult grow_semi_global(const Dataset& ds, const StoppingConfig& cfg) {
    StoppingConfig c = cfg;
    if (c.mode != GrowthMode::semi_global && c.mode != GrowthMode::semi_global_interpolated)
        c.mode = GrowthMode::semi_global;
    return grow(ds, c);
}

GrowResult grow_deep(const Dataset& ds) {
    StoppingConfig cfg;
    cfg.kappa = 0.0;
    cfg.mode = GrowthMode::global;
    return grow(ds, cfg);
}

GrowResult grow_min_impurity_baseline(const Dataset& ds, double threshold) {
    StoppingConfig cfg;
    cfg.kappa = -1.0; // the residual never falls below -1: growth runs to exhaustion
    cfg.mode = GrowthMode::semi_global;
    cfg.min_gain = threshold;
    return grow(ds, cfg);
}

double segment_residual(double r_sq_k, double r_sq_l, double alpha) {
    const double w = 1.0 - alpha;
    return r_sq_l + w * w * (r_sq_k - r_sq_l);
}

std::pair<int, double> locate(const FlowTrace& trace, double t) {
    const int last = trace.last();
    if (t < 0.0 || t > trace.step(last).k + 1e-9)
        throw std::out_of_range("locate: flow position outside the recorded trace");
    // steps have strictly increasing k
    int g = 0;
    for (int s = 0; s <= last; ++s) {
        if (trace.step(s).k <= t) g = s;
        else break;
    }
    if (g == last) return {last, 0.0};
    const double k0 = trace.step(g).k;
    const double k1 = trace.step(g + 1).k;
    return {g, (t - k0) / (k1 - k0)};
}

std::vector<double> fitted_at(const FlowTrace& trace, int step_k, int step_l, double alpha) {
    const Tree* t = trace.tree.get();
    const int n = t ? t->n() : 0;
    auto stage_fit = [&](int s) {
        return s == 0 ? std::vector<double>(n, 0.0) : fit_values({t, s});
    };
    if (step_k == step_l || alpha == 0.0) return stage_fit(step_k);
    std::vector<double> fk = stage_fit(step_k);
    const std::vector<double> fl = stage_fit(step_l);
    for (int i = 0; i < n; ++i) fk[i] = (1.0 - alpha) * fk[i] + alpha * fl[i];
    return fk;
}

StopReport interpolated_stop(const FlowTrace& trace, double kappa) {
    if (kappa < 0.0) throw std::invalid_argument("interpolated_stop: kappa must be >= 0");
    StopReport rep;
    rep.kappa = kappa;
    const int n = trace.tree ? trace.tree->n() : trace.n;

    int hit = -1;
    for (int s = 0; s <= trace.last(); ++s) {
        if (trace.step(s).residual <= kappa) {
            hit = s;
            break;
        }
    }
    if (hit < 0) { // never reached: report the end of the trace, flagged
        const int s = trace.last();
        rep.step_k = rep.step_l = s;
        rep.tau = rep.k_at_stop = trace.step(s).k;
        rep.residual_at_stop = trace.step(s).residual;
        rep.cause = trace.cause == StopCause::threshold ? StopCause::exhausted : trace.cause;
        rep.fitted = s == 0 ? std::vector<double>(n, 0.0) : fit_values({trace.tree.get(), s});
        return rep;
    }
    if (hit == 0) { // kappa >= ||Y||_n^2
        rep.step_k = rep.step_l = 0;
        rep.tau = rep.k_at_stop = 0.0;
        rep.residual_at_stop = trace.y_norm_sq;
        rep.cause = StopCause::pre_root;
        rep.fitted.assign(n, 0.0);
        return rep;
    }

    const double r_k = trace.step(hit - 1).residual; // > kappa
    const double r_l = trace.step(hit).residual;     // <= kappa
    double alpha = 1.0 - std::sqrt((kappa - r_l) / (r_k - r_l));
    if (!(alpha > 0.0)) alpha = 0.0;
    if (alpha >= 1.0 || kappa == r_l) {
        // boundary: clamp to the later generation
        rep.step_k = rep.step_l = hit;
        rep.alpha = 0.0;
        rep.interpolated = true;
        rep.tau = rep.k_at_stop = trace.step(hit).k;
        rep.residual_at_stop = r_l;
        rep.cause = StopCause::threshold;
        rep.fitted = fit_values({trace.tree.get(), hit});
        return rep;
    }
    rep.step_k = hit - 1;
    rep.step_l = hit;
    rep.alpha = alpha;
    rep.interpolated = true;
    const double k0 = trace.step(hit - 1).k;
    const double k1 = trace.step(hit).k;
    rep.tau = rep.k_at_stop = (1.0 - alpha) * k0 + alpha * k1;
    rep.residual_at_stop = segment_residual(r_k, r_l, alpha);
    rep.cause = StopCause::threshold;
    rep.fitted = fitted_at(trace, hit - 1, hit, alpha);
    return rep;
}

} // namespace stoptree
