#include "blackout/eval.hpp"

#include "blackout/baselines.hpp"
#include "blackout/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace blackout {

namespace {

std::uint64_t mix64(std::uint64_t z)
{
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

int max_of(const std::vector<int>& v) { return v.empty() ? 0 : *std::max_element(v.begin(), v.end()); }

// Linear-interpolation quantile of a sorted sample.
double quantile_sorted(const std::vector<double>& sorted, double q)
{
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::vector<BlackoutWindow> find_candidate_windows(const Panel& panel, const WindowOptions& options)
{
    if (options.lengths.empty()) throw InvalidArgument("window length set is empty");
    if (options.stride < 1) throw InvalidArgument("window stride must be positive");
    for (int len : options.lengths)
        if (len < 1) throw InvalidArgument("window lengths must be positive");
    for (int h : options.horizons)
        if (h < 1) throw InvalidArgument("forecast horizons must be positive");

    const int T = panel.num_steps();
    const int D = panel.num_detectors();
    const int max_h = max_of(options.horizons);
    const std::uint64_t base = derive_seed(options.seed, "window-length");

    std::vector<BlackoutWindow> out;
    std::vector<int> unobserved_prefix(static_cast<std::size_t>(T) + 1);
    for (int d = 0; d < D; ++d) {
        unobserved_prefix[0] = 0;
        for (int t = 0; t < T; ++t)
            unobserved_prefix[static_cast<std::size_t>(t) + 1] =
                unobserved_prefix[static_cast<std::size_t>(t)] + (panel.observed(t, d) ? 0 : 1);
        for (int start = 1; start < T; start += options.stride) {
            const auto key = (static_cast<std::uint64_t>(d) << 32) | static_cast<std::uint64_t>(start);
            const int len = options.lengths[mix64(base ^ key) % options.lengths.size()];
            const int end = start + len - 1;
            const int span_hi = end + max_h;
            if (span_hi >= T) continue;
            if (unobserved_prefix[static_cast<std::size_t>(span_hi) + 1] !=
                unobserved_prefix[static_cast<std::size_t>(start) - 1])
                continue;
            BlackoutWindow w;
            w.detector = d;
            w.start = start;
            w.end = end;
            w.window_id = panel.detector_ids()[static_cast<std::size_t>(d)] + ":" +
                          std::to_string(start) + ":" + std::to_string(len);
            for (int h : options.horizons) w.forecast_targets[h] = end + h;
            const auto ts = panel.timestamps()[static_cast<std::size_t>(start)];
            w.month = month_of(ts);
            w.start_hour = hour_of(ts);
            out.push_back(std::move(w));
        }
    }
    return out;
}

StratifiedSample sample_stratified(const std::vector<BlackoutWindow>& candidates, int per_month,
                                   std::uint64_t seed, int max_horizon)
{
    StratifiedSample out;
    if (per_month <= 0) return out;

    std::map<int, std::vector<std::size_t>> by_month;
    for (std::size_t i = 0; i < candidates.size(); ++i) by_month[candidates[i].month].push_back(i);

    // Accepted spans per detector: start-1 -> end+max_horizon.
    std::map<int, std::map<int, int>> taken;
    auto conflicts = [&](const BlackoutWindow& w) {
        const int lo = w.start - 1;
        const int hi = w.end + max_horizon;
        auto& spans = taken[w.detector];
        auto it = spans.upper_bound(hi);
        if (it == spans.begin()) return false;
        --it;
        return it->second >= lo;
    };

    for (auto& [month, indices] : by_month) {
        std::mt19937_64 rng(derive_seed(seed, "stratified-month", static_cast<std::uint64_t>(month)));
        std::shuffle(indices.begin(), indices.end(), rng);
        int picked = 0;
        for (std::size_t idx : indices) {
            if (picked == per_month) break;
            const auto& w = candidates[idx];
            if (conflicts(w)) continue;
            taken[w.detector][w.start - 1] = w.end + max_horizon;
            out.windows.push_back(w);
            ++picked;
        }
        if (picked < per_month) out.shortfall[month] = per_month - picked;
    }
    std::sort(out.windows.begin(), out.windows.end(), [](const auto& a, const auto& b) {
        return std::tie(a.start, a.detector) < std::tie(b.start, b.detector);
    });
    return out;
}

std::vector<MaskInterval> mask_intervals(const std::vector<BlackoutWindow>& windows)
{
    std::vector<MaskInterval> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back({w.detector, w.start, w.end});
    return out;
}

// ---------------------------------------------------------------------------

Method locf_method()
{
    return {"LOCF", [](const Panel& training, const std::vector<BlackoutWindow>& windows,
                       const std::vector<int>& horizons) {
                MethodOutput out;
                for (const auto& w : windows) {
                    const double v = locf_forecast(training, w, 1);
                    out.imputations.emplace_back(static_cast<std::size_t>(w.length()), v);
                    std::map<int, double> f;
                    for (int h : horizons) f[h] = locf_forecast(training, w, h);
                    out.forecasts.push_back(std::move(f));
                    out.notes.emplace_back();
                }
                return out;
            }};
}

Method interp_seasonal_method()
{
    return {"LinearInterp+SeasonalNaive",
            [](const Panel& training, const std::vector<BlackoutWindow>& windows,
               const std::vector<int>& horizons) {
                MethodOutput out;
                for (const auto& w : windows) {
                    auto interp = linear_interp_impute(training, w);
                    std::string note = interp.fell_back_to_locf ? "interp_fallback_locf" : "";
                    out.imputations.push_back(std::move(interp.values));
                    std::map<int, double> f;
                    for (int h : horizons) {
                        const auto s = seasonal_naive_forecast(training, w, h);
                        f[h] = s.value;
                        if (!note.empty()) note += ';';
                        note += "h" + std::to_string(h) + "=" + std::string(to_string(s.branch));
                    }
                    out.forecasts.push_back(std::move(f));
                    out.notes.push_back(std::move(note));
                }
                return out;
            }};
}

MethodOutput run_lds(const ModelParams& params, const Panel& training,
                     const std::vector<BlackoutWindow>& windows, const std::vector<int>& horizons)
{
    const auto tf = build_time_features(training.timestamps());
    const auto sf = StaticFeatures::none(training.num_detectors());
    const auto trace = filter_sequence(training, tf, sf, params);
    const auto smoothed = rts_smooth(trace, params.lds);

    MethodOutput out;
    for (const auto& w : windows) {
        std::vector<double> imputed;
        imputed.reserve(static_cast<std::size_t>(w.length()));
        for (int t = w.start; t <= w.end; ++t)
            imputed.push_back(params.lds.C.row(w.detector).dot(
                smoothed.smoothed[static_cast<std::size_t>(t)].mean));
        out.imputations.push_back(std::move(imputed));
        std::map<int, double> f;
        const auto& belief = trace.filtered[static_cast<std::size_t>(w.end)];
        for (int h : horizons) f[h] = forecast(belief, params.lds, h).mean(w.detector);
        out.forecasts.push_back(std::move(f));
        out.notes.emplace_back();
    }
    return out;
}

Method lds_method(std::string name, ModelParams params)
{
    return {std::move(name), [params = std::move(params)](const Panel& training,
                                                          const std::vector<BlackoutWindow>& windows,
                                                          const std::vector<int>& horizons) {
                return run_lds(params, training, windows, horizons);
            }};
}

void TwoPhaseTrainer::reset_if_new(const Panel& training)
{
    if (trained_on_ == &training) return;
    trained_on_ = &training;
    mar_.reset();
    mnar_.reset();
}

const FitResult& TwoPhaseTrainer::mar(const Panel& training)
{
    reset_if_new(training);
    if (!mar_) {
        const auto tf = build_time_features(training.timestamps());
        mar_ = fit_mar(training, tf, StaticFeatures::none(training.num_detectors()), config_);
    }
    return *mar_;
}

const FitResult& TwoPhaseTrainer::mnar(const Panel& training)
{
    const auto& mar_fit = mar(training);
    if (!mnar_) {
        const auto tf = build_time_features(training.timestamps());
        mnar_ = fit_mnar_warm(training, tf, StaticFeatures::none(training.num_detectors()),
                              mar_fit.params.lds, config_);
    }
    return *mnar_;
}

Method trained_mar_method(std::shared_ptr<TwoPhaseTrainer> trainer)
{
    return {"MAR", [trainer](const Panel& training, const std::vector<BlackoutWindow>& windows,
                             const std::vector<int>& horizons) {
                const auto& fitted = trainer->mar(training);
                auto out = run_lds(fitted.params, training, windows, horizons);
                out.traces.emplace_back("MAR", fitted.trace);
                return out;
            }};
}

Method trained_mnar_method(std::shared_ptr<TwoPhaseTrainer> trainer)
{
    return {"MNAR", [trainer](const Panel& training, const std::vector<BlackoutWindow>& windows,
                              const std::vector<int>& horizons) {
                const auto& mar_fit = trainer->mar(training);
                const auto& fitted = trainer->mnar(training);
                auto out = run_lds(fitted.params, training, windows, horizons);
                out.traces.emplace_back("MAR", mar_fit.trace);
                out.traces.emplace_back("MNAR", fitted.trace);
                return out;
            }};
}

// ---------------------------------------------------------------------------

std::string task_name(int horizon) { return "h" + std::to_string(horizon); }

const MethodReport* EvalReport::find(std::string_view method) const
{
    for (const auto& m : methods)
        if (m.name == method) return &m;
    return nullptr;
}

double pooled_rmse(const std::vector<WindowError>& errors)
{
    double sse = 0.0;
    long n = 0;
    for (const auto& e : errors) {
        sse += e.sse;
        n += e.count;
    }
    return n > 0 ? std::sqrt(sse / static_cast<double>(n)) : 0.0;
}

std::pair<double, double> bootstrap_ci(const std::vector<WindowError>& errors, int n_resamples,
                                       double level, std::uint64_t seed)
{
    const double point = pooled_rmse(errors);
    if (errors.size() < 2 || n_resamples < 1) return {point, point};
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, errors.size() - 1);
    std::vector<double> stats;
    stats.reserve(static_cast<std::size_t>(n_resamples));
    for (int r = 0; r < n_resamples; ++r) {
        double sse = 0.0;
        long n = 0;
        for (std::size_t i = 0; i < errors.size(); ++i) {
            const auto& e = errors[pick(rng)];
            sse += e.sse;
            n += e.count;
        }
        stats.push_back(n > 0 ? std::sqrt(sse / static_cast<double>(n)) : 0.0);
    }
    std::sort(stats.begin(), stats.end());
    const double tail = 0.5 * (1.0 - level);
    double lo = quantile_sorted(stats, tail);
    double hi = quantile_sorted(stats, 1.0 - tail);
    return {std::min(lo, point), std::max(hi, point)};
}

EvalReport evaluate(const Panel& ground_truth, const std::vector<BlackoutWindow>& windows,
                    const std::vector<Method>& methods, const EvalOptions& options)
{
    for (const auto& w : windows) {
        for (int h : options.horizons) {
            const int target = w.end + h;
            if (target >= ground_truth.num_steps() || !ground_truth.observed(target, w.detector))
                throw InvalidArgument("window " + w.window_id + " lacks an observed target at horizon " +
                                      std::to_string(h));
        }
    }
    const auto intervals = mask_intervals(windows);
    const Panel training = apply_artificial_mask(ground_truth, intervals);

    EvalReport report;
    report.horizons = options.horizons;
    report.windows = windows;
    report.detector_ids = ground_truth.detector_ids();

    for (const auto& method : methods) {
        MethodReport mr;
        mr.name = method.name;
        MethodOutput out;
        std::string failure;
        try {
            out = method.run(training, windows, options.horizons);
            if (out.imputations.size() != windows.size() || out.forecasts.size() != windows.size())
                failure = "method returned the wrong number of windows";
        } catch (const std::exception& e) {
            failure = e.what();
        }
        mr.traces = out.traces;

        for (std::size_t i = 0; i < windows.size(); ++i) {
            const auto& w = windows[i];
            WindowResult wr;
            wr.window_id = w.window_id;
            if (!failure.empty()) {
                wr.failed = true;
                wr.note = failure;
                mr.windows.push_back(std::move(wr));
                continue;
            }
            wr.imputations = out.imputations[i];
            wr.forecasts = out.forecasts[i];
            if (i < out.notes.size()) wr.note = out.notes[i];
            bool ok = static_cast<int>(wr.imputations.size()) == w.length();
            for (std::size_t j = 0; ok && j < wr.imputations.size(); ++j) {
                const double pred = wr.imputations[j];
                if (!std::isfinite(pred)) {
                    ok = false;
                    break;
                }
                const double err = pred - ground_truth.value(w.start + static_cast<int>(j), w.detector);
                wr.impute_sse += err * err;
            }
            wr.impute_count = w.length();
            for (int h : options.horizons) {
                auto it = wr.forecasts.find(h);
                if (!ok || it == wr.forecasts.end() || !std::isfinite(it->second)) {
                    ok = false;
                    break;
                }
                const double err = it->second - ground_truth.value(w.end + h, w.detector);
                wr.forecast_sq[h] = err * err;
            }
            if (!ok) {
                wr.failed = true;
                if (wr.note.empty()) wr.note = "non-finite or malformed prediction";
            }
            mr.windows.push_back(std::move(wr));
        }

        std::vector<WindowError> impute_errors;
        std::map<int, std::vector<WindowError>> forecast_errors;
        for (const auto& wr : mr.windows) {
            if (wr.failed) {
                ++mr.failed_windows;
                continue;
            }
            impute_errors.push_back({wr.impute_sse, wr.impute_count});
            for (const auto& [h, sq] : wr.forecast_sq) forecast_errors[h].push_back({sq, 1});
        }
        auto summarize = [&](const std::string& task, const std::vector<WindowError>& errs) {
            TaskSummary s;
            s.rmse = pooled_rmse(errs);
            std::tie(s.ci_low, s.ci_high) =
                bootstrap_ci(errs, options.bootstrap_resamples, options.level,
                             derive_seed(options.seed, "bootstrap/" + mr.name + "/" + task));
            s.n_windows = static_cast<int>(errs.size());
            for (const auto& e : errs) s.n_points += e.count;
            mr.tasks[task] = s;
        };
        summarize("impute", impute_errors);
        for (int h : options.horizons) summarize(task_name(h), forecast_errors[h]);
        report.methods.push_back(std::move(mr));
    }
    return report;
}

std::string length_bucket(int length)
{
    if (length <= 6) return "<=6";
    if (length <= 12) return "7-12";
    if (length <= 24) return "13-24";
    return ">24";
}

std::string hour_bucket(int hour)
{
    const int lo = (hour / 4) * 4;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%02d-%02d", lo, lo + 4);
    return buf;
}

std::vector<BucketRow> stratify(const EvalReport& report, Stratum by)
{
    std::vector<std::string> labels;
    if (by == Stratum::LengthBucket) labels = {"<=6", "7-12", "13-24", ">24"};
    else
        for (int h = 0; h < 24; h += 4) labels.push_back(hour_bucket(h));

    std::vector<BucketRow> rows;
    for (const auto& m : report.methods) {
        std::map<std::string, BucketRow> acc;
        for (const auto& label : labels) acc[label] = BucketRow{m.name, label};
        for (std::size_t i = 0; i < m.windows.size() && i < report.windows.size(); ++i) {
            const auto& wr = m.windows[i];
            if (wr.failed) continue;
            const auto& w = report.windows[i];
            const auto label =
                by == Stratum::LengthBucket ? length_bucket(w.length()) : hour_bucket(w.start_hour);
            auto& row = acc[label];
            row.n_windows += 1;
            row.n_cells += wr.impute_count;
            row.sse += wr.impute_sse;
        }
        for (const auto& label : labels) {
            auto row = acc[label];
            row.rmse = row.n_cells > 0 ? std::sqrt(row.sse / row.n_cells) : 0.0;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels)
{
    if (scores.size() != labels.size()) throw InvalidArgument("scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    long n_pos = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]] == 1) {
                rank_sum += avg_rank;
                ++n_pos;
            }
        }
        i = j + 1;
    }
    const long n_neg = static_cast<long>(scores.size()) - n_pos;
    if (n_pos == 0 || n_neg == 0) return 0.5;
    const double u = rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double LogisticModel::score(const Eigen::Ref<const Vector>& features) const
{
    const auto p = features.size();
    const Vector z = (features - mean).cwiseQuotient(scale);
    return weights.head(p).dot(z) + weights(p);
}

LogisticModel fit_logistic(const Matrix& X, const std::vector<int>& y, int iterations,
                           double learning_rate, double l2)
{
    const auto n = X.rows();
    const auto p = X.cols();
    if (static_cast<Eigen::Index>(y.size()) != n) throw InvalidArgument("label count mismatch");
    LogisticModel model;
    model.mean = n > 0 ? Vector(X.colwise().mean().transpose()) : Vector::Zero(p);
    model.scale = Vector::Ones(p);
    if (n > 1) {
        for (Eigen::Index j = 0; j < p; ++j) {
            const double sd =
                std::sqrt((X.col(j).array() - model.mean(j)).square().sum() / static_cast<double>(n));
            model.scale(j) = sd > 1e-12 ? sd : 1.0;
        }
    }
    model.weights = Vector::Zero(p + 1);
    if (n == 0) return model;

    Matrix Z(n, p + 1);
    Z.leftCols(p) = (X.rowwise() - model.mean.transpose()).array().rowwise() /
                    model.scale.transpose().array();
    Z.col(p).setOnes();
    Vector target(n);
    for (Eigen::Index i = 0; i < n; ++i) target(i) = y[static_cast<std::size_t>(i)] ? 1.0 : 0.0;

    for (int it = 0; it < iterations; ++it) {
        const Vector pi = probs(Z * model.weights);
        Vector grad = Z.transpose() * (target - pi) / static_cast<double>(n);
        grad.head(p) -= l2 * model.weights.head(p);
        model.weights += learning_rate * grad;
    }
    return model;
}

std::vector<int> run_lengths(const BoolMatrix& mask)
{
    std::vector<int> out;
    for (Eigen::Index d = 0; d < mask.cols(); ++d) {
        int run = 0;
        for (Eigen::Index t = 0; t < mask.rows(); ++t) {
            if (mask(t, d)) {
                ++run;
            } else if (run > 0) {
                out.push_back(run);
                run = 0;
            }
        }
        if (run > 0) out.push_back(run);
    }
    return out;
}

namespace {

constexpr int kRecent = 6;

// Variance of the observed values of column d within [lo, hi].
double recent_variance(const Panel& panel, int d, int lo, int hi)
{
    double sum = 0.0;
    double sq = 0.0;
    int n = 0;
    for (int t = std::max(lo, 0); t <= hi; ++t) {
        if (!panel.observed(t, d)) continue;
        sum += panel.value(t, d);
        sq += panel.value(t, d) * panel.value(t, d);
        ++n;
    }
    if (n < 2) return 0.0;
    const double mean = sum / n;
    return std::max(sq / n - mean * mean, 0.0);
}

struct ColumnScale {
    double mean = 0.0;
    double sd = 1.0;
};

std::vector<ColumnScale> column_scales(const Panel& panel)
{
    std::vector<ColumnScale> out(static_cast<std::size_t>(panel.num_detectors()));
    for (int d = 0; d < panel.num_detectors(); ++d) {
        double sum = 0.0;
        double sq = 0.0;
        int n = 0;
        for (int t = 0; t < panel.num_steps(); ++t) {
            if (!panel.observed(t, d)) continue;
            sum += panel.value(t, d);
            sq += panel.value(t, d) * panel.value(t, d);
            ++n;
        }
        if (n == 0) continue;
        const double mean = sum / n;
        const double var = std::max(sq / n - mean * mean, 0.0);
        out[static_cast<std::size_t>(d)] = {mean, var > 1e-12 ? std::sqrt(var) : 1.0};
    }
    return out;
}

bool naturally_missing(const Panel& panel, int t, int d)
{
    return !panel.observed(t, d) && !panel.artificial(t, d);
}

OnsetDiagnostic onset_test(const Panel& panel, const TimeFeatures& tf, int split_time)
{
    OnsetDiagnostic out;
    const int T = panel.num_steps();
    const int week = panel.steps_for(std::chrono::hours(24 * 7));
    if (week <= 0) {
        out.skipped = true;
        out.note = "sampling interval does not divide one week";
        return out;
    }
    const auto scales = column_scales(panel);
    const int p = tf.dim();

    auto clean = [&](int t, int d) {
        if (t - kRecent < 0 || t + kRecent >= T) return false;
        for (int s = t - kRecent; s <= t + kRecent; ++s)
            if (!panel.observed(s, d)) return false;
        return true;
    };
    auto features = [&](int t, int d) {
        const auto& sc = scales[static_cast<std::size_t>(d)];
        Vector f(2 + p);
        f(0) = (panel.value(t - 1, d) - sc.mean) / sc.sd;
        f(1) = recent_variance(panel, d, t - kRecent, t - 1) / (sc.sd * sc.sd);
        f.tail(p) = tf.F.row(t).transpose();
        return f;
    };

    std::vector<Vector> train_x, test_x;
    std::vector<int> train_y, test_y;
    for (int d = 0; d < panel.num_detectors(); ++d) {
        for (int t = 1; t < T; ++t) {
            if (t - kRecent < 0 || !naturally_missing(panel, t, d)) continue;
            bool history = true;
            for (int s = t - kRecent; s < t && history; ++s) history = panel.observed(s, d);
            if (!history) continue;
            int control = -1;
            for (int cand : {t - week, t + week}) {
                if (clean(cand, d)) {
                    control = cand;
                    break;
                }
            }
            if (control < 0) continue;
            ++out.n_onsets;
            auto& xs = t < split_time ? train_x : test_x;
            auto& ys = t < split_time ? train_y : test_y;
            xs.push_back(features(t, d));
            ys.push_back(1);
            xs.push_back(features(control, d));
            ys.push_back(0);
        }
    }
    out.n_train = static_cast<int>(train_x.size());
    out.n_test = static_cast<int>(test_x.size());
    if (out.n_train < 20 || out.n_test < 20) {
        out.skipped = true;
        out.note = "too few matched onsets";
        return out;
    }
    Matrix X(out.n_train, 2 + p);
    for (int i = 0; i < out.n_train; ++i) X.row(i) = train_x[static_cast<std::size_t>(i)].transpose();
    const auto model = fit_logistic(X, train_y);
    std::vector<double> scores;
    for (const auto& x : test_x) scores.push_back(model.score(x));
    out.auc = roc_auc(scores, test_y);
    return out;
}

NextStepDiagnostic next_step_test(const Panel& panel, const Matrix& latent, const TimeFeatures& tf,
                                  int split_time)
{
    NextStepDiagnostic out;
    const int T = panel.num_steps();
    const int p = tf.dim();
    const auto K = latent.cols();
    const auto scales = column_scales(panel);

    std::vector<double> scores_obs, scores_lat;
    std::vector<int> labels;
    int train_pos = 0;
    for (int d = 0; d < panel.num_detectors(); ++d) {
        const auto& sc = scales[static_cast<std::size_t>(d)];
        std::vector<int> rows;
        std::vector<int> y;
        for (int t = 0; t + 1 < T; ++t) {
            if (!panel.observed(t, d) || panel.artificial(t + 1, d)) continue;
            rows.push_back(t);
            y.push_back(naturally_missing(panel, t + 1, d) ? 1 : 0);
        }
        Matrix X(static_cast<Eigen::Index>(rows.size()), 2 + p + K);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const int t = rows[i];
            const auto r = static_cast<Eigen::Index>(i);
            X(r, 0) = (panel.value(t, d) - sc.mean) / sc.sd;
            X(r, 1) = recent_variance(panel, d, t - kRecent + 1, t) / (sc.sd * sc.sd);
            X.block(r, 2, 1, p) = tf.F.row(t + 1);
            X.block(r, 2 + p, 1, K) = latent.row(t);
        }
        std::vector<int> train_idx, test_idx;
        for (std::size_t i = 0; i < rows.size(); ++i)
            (rows[i] < split_time ? train_idx : test_idx).push_back(static_cast<int>(i));
        std::vector<int> y_train;
        for (int i : train_idx) y_train.push_back(y[static_cast<std::size_t>(i)]);
        const int pos = static_cast<int>(std::count(y_train.begin(), y_train.end(), 1));
        train_pos += pos;
        out.n_train += static_cast<int>(train_idx.size());
        out.n_test += static_cast<int>(test_idx.size());

        const bool trainable = pos > 0 && pos < static_cast<int>(y_train.size());
        Matrix X_train(static_cast<Eigen::Index>(train_idx.size()), X.cols());
        for (std::size_t i = 0; i < train_idx.size(); ++i)
            X_train.row(static_cast<Eigen::Index>(i)) = X.row(train_idx[i]);
        LogisticModel obs_model, lat_model;
        if (trainable) {
            obs_model = fit_logistic(X_train.leftCols(2 + p), y_train);
            lat_model = fit_logistic(X_train, y_train);
        }
        for (int i : test_idx) {
            labels.push_back(y[static_cast<std::size_t>(i)]);
            out.n_positive += y[static_cast<std::size_t>(i)];
            if (trainable) {
                scores_obs.push_back(obs_model.score(X.row(i).head(2 + p).transpose()));
                scores_lat.push_back(lat_model.score(X.row(i).transpose()));
            } else {
                scores_obs.push_back(0.0);
                scores_lat.push_back(0.0);
            }
        }
    }
    if (train_pos < 10 || out.n_positive < 10) {
        out.skipped = true;
        out.note = "too few next-step missingness events";
        return out;
    }
    out.auc_observed = roc_auc(scores_obs, labels);
    out.auc_latent = roc_auc(scores_lat, labels);
    return out;
}

}  // namespace

DiagnosticsReport missingness_diagnostics(const Panel& panel, const Matrix& smoothed_means,
                                          const TimeFeatures& time_features, int split_time)
{
    if (smoothed_means.rows() != panel.num_steps())
        throw InvalidArgument("smoothed means do not match panel length");
    if (time_features.F.rows() != panel.num_steps())
        throw InvalidArgument("time features do not match panel length");

    DiagnosticsReport out;
    out.onset = onset_test(panel, time_features, split_time);
    out.next_step = next_step_test(panel, smoothed_means, time_features, split_time);

    BoolMatrix natural = (!panel.observed_mask()) && (!panel.artificial_mask());
    auto runs = run_lengths(natural);
    auto& s = out.structure;
    s.n_runs = static_cast<int>(runs.size());
    if (!runs.empty()) {
        std::vector<double> sorted(runs.begin(), runs.end());
        std::sort(sorted.begin(), sorted.end());
        s.median_length = quantile_sorted(sorted, 0.5);
        s.p75_length = quantile_sorted(sorted, 0.75);
        s.max_length = static_cast<int>(sorted.back());
    }
    BoolMatrix outage(panel.num_steps(), 1);
    for (int t = 0; t < panel.num_steps(); ++t) outage(t, 0) = natural.row(t).all();
    const auto events = run_lengths(outage);
    s.network_outage_events = static_cast<int>(events.size());
    if (!events.empty())
        s.network_outage_mean_length =
            std::accumulate(events.begin(), events.end(), 0.0) / static_cast<double>(events.size());
    return out;
}

}  // namespace blackout
