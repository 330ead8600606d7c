#include "blackout/commands.hpp"

#include "blackout/plot.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace blackout {

namespace {

template <typename T>
void read_if(const Json& j, const char* key, T& out, const std::string& what)
{
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ParseError("invalid value for '" + std::string(key) + "' in " + what);
    }
}

void reject_unknown(const Json& j, std::initializer_list<const char*> keys, const std::string& what)
{
    if (!j.is_object()) throw ParseError(what + " must be a JSON object");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key)) throw ParseError("unknown key '" + key + "' in " + what);
}

const std::set<std::string>& known_methods()
{
    static const std::set<std::string> names{"LOCF", "LinearInterp+SeasonalNaive", "MAR", "MNAR"};
    return names;
}

std::string alpha_label(double alpha)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", alpha);
    return buf;
}

// Mean and sample standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& v)
{
    if (v.empty()) return {0.0, 0.0};
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

fs::path record(std::vector<fs::path>& outputs, fs::path p)
{
    outputs.push_back(p);
    return p;
}

Json relative_outputs(const fs::path& out_dir, const std::vector<fs::path>& outputs)
{
    Json out = Json::array();
    for (const auto& p : outputs) out.push_back(p.lexically_relative(out_dir).generic_string());
    return out;
}

void check_em(const EmConfig& em)
{
    try {
        em.validate();
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(std::string("invalid EM config: ") + e.what());
    }
}

void check_eval(const EvalConfig& c)
{
    if (c.lengths.empty() || c.horizons.empty()) throw InvalidArgument("eval lengths and horizons must be nonempty");
    if (c.per_month < 0) throw InvalidArgument("per_month must be nonnegative");
    if (c.bootstrap_resamples < 0) throw InvalidArgument("bootstrap_resamples must be nonnegative");
    if (!(c.level > 0.0 && c.level < 1.0)) throw InvalidArgument("level must lie in (0, 1)");
    for (const auto& m : c.methods)
        if (!known_methods().count(m)) throw InvalidArgument("unknown method '" + m + "'");
    check_em(c.em);
}

}  // namespace

std::string to_string(TrainMode mode)
{
    switch (mode) {
    case TrainMode::Mar: return "mar";
    case TrainMode::Mnar: return "mnar";
    case TrainMode::TwoPhase: return "two_phase";
    }
    return "two_phase";
}

TrainMode train_mode_from(const std::string& s)
{
    if (s == "mar") return TrainMode::Mar;
    if (s == "mnar") return TrainMode::Mnar;
    if (s == "two_phase") return TrainMode::TwoPhase;
    throw ParseError("unknown training mode '" + s + "' (expected mar, mnar or two_phase)");
}

EvalConfig SweepConfig::default_sweep_eval()
{
    EvalConfig c;
    c.per_month = 100;
    c.methods = {"MAR", "MNAR"};
    return c;
}

Json train_config_to_json(const TrainConfig& c)
{
    return {{"mode", to_string(c.mode)}, {"em", em_config_to_json(c.em)}};
}

TrainConfig train_config_from_json(const Json& j)
{
    reject_unknown(j, {"mode", "em"}, "train config");
    TrainConfig c;
    if (j.contains("mode")) c.mode = train_mode_from(j["mode"].get<std::string>());
    if (j.contains("em")) c.em = em_config_from_json(j["em"]);
    return c;
}

Json eval_config_to_json(const EvalConfig& c)
{
    return {{"seed", c.seed},
            {"lengths", c.lengths},
            {"horizons", c.horizons},
            {"stride", c.stride},
            {"per_month", c.per_month},
            {"bootstrap_resamples", c.bootstrap_resamples},
            {"level", c.level},
            {"methods", c.methods},
            {"em", em_config_to_json(c.em)}};
}

EvalConfig eval_config_from_json(const Json& j, EvalConfig c)
{
    const std::string what = "eval config";
    reject_unknown(j, {"seed", "lengths", "horizons", "stride", "per_month", "bootstrap_resamples", "level",
                       "methods", "em"},
                   what);
    read_if(j, "seed", c.seed, what);
    read_if(j, "lengths", c.lengths, what);
    read_if(j, "horizons", c.horizons, what);
    read_if(j, "stride", c.stride, what);
    read_if(j, "per_month", c.per_month, what);
    read_if(j, "bootstrap_resamples", c.bootstrap_resamples, what);
    read_if(j, "level", c.level, what);
    read_if(j, "methods", c.methods, what);
    if (j.contains("em")) c.em = em_config_from_json(j["em"], c.em);
    return c;
}

Json sweep_config_to_json(const SweepConfig& c)
{
    return {{"seed", c.seed},
            {"alphas", c.alphas},
            {"seeds", c.seeds},
            {"jobs", c.jobs},
            {"synth", synth_config_to_json(c.synth)},
            {"eval", eval_config_to_json(c.eval)}};
}

SweepConfig sweep_config_from_json(const Json& j)
{
    const std::string what = "sweep config";
    reject_unknown(j, {"seed", "alphas", "seeds", "jobs", "synth", "eval"}, what);
    SweepConfig c;
    read_if(j, "seed", c.seed, what);
    read_if(j, "alphas", c.alphas, what);
    read_if(j, "seeds", c.seeds, what);
    read_if(j, "jobs", c.jobs, what);
    if (j.contains("synth")) c.synth = synth_config_from_json(j["synth"]);
    if (j.contains("eval")) c.eval = eval_config_from_json(j["eval"], c.eval);
    return c;
}

Json diagnose_config_to_json(const DiagnoseConfig& c)
{
    return {{"split_fraction", c.split_fraction}, {"em", em_config_to_json(c.em)}};
}

DiagnoseConfig diagnose_config_from_json(const Json& j)
{
    reject_unknown(j, {"split_fraction", "em"}, "diagnose config");
    DiagnoseConfig c;
    read_if(j, "split_fraction", c.split_fraction, "diagnose config");
    if (j.contains("em")) c.em = em_config_from_json(j["em"]);
    return c;
}

Json load_config_document(const fs::path& path, const std::string& command)
{
    Json j = read_json_file(path);
    if (j.is_object() && j.value("format", "") == kManifestFormat) {
        if (j.value("command", "") != command)
            throw ParseError(path.string() + " is a manifest of '" + j.value("command", "") + "', not '" +
                             command + "'");
        return j.at("config");
    }
    return j;
}

fs::path write_manifest(const fs::path& out_dir, const std::string& command, const Json& config,
                        const Json& inputs, const std::vector<fs::path>& outputs)
{
    const fs::path path = out_dir / "manifest.json";
    Json m = {{"format", kManifestFormat},
              {"command", command},
              {"config", config},
              {"inputs", inputs},
              {"outputs", relative_outputs(out_dir, outputs)}};
    write_json_file(m, path);
    return path;
}

// ---------------------------------------------------------------------------

std::vector<fs::path> cmd_generate(const SynthConfig& config, const fs::path& out_dir)
{
    const auto out = generate(config);
    save_synth_output(out, out_dir);
    std::vector<fs::path> outputs{out_dir / "panel.csv", out_dir / "truth.csv", out_dir / "params.json"};
    outputs.push_back(write_manifest(out_dir, "generate", synth_config_to_json(config), Json::object(), outputs));
    return outputs;
}

std::vector<fs::path> cmd_train(const fs::path& panel_path, const TrainConfig& config,
                                const std::optional<fs::path>& warm_start, const fs::path& out_dir)
{
    check_em(config.em);
    const Panel panel = load_panel(panel_path);
    const auto tf = build_time_features(panel.timestamps());
    const auto sf = StaticFeatures::none(panel.num_detectors());

    std::optional<ModelParams> warm;
    if (warm_start) {
        warm = load_model(*warm_start);
        if (warm->obs_dim() != panel.num_detectors())
            throw InvalidArgument("warm-start model has " + std::to_string(warm->obs_dim()) +
                                  " detectors but the panel has " + std::to_string(panel.num_detectors()));
        if (warm->latent_dim() != config.em.K)
            throw InvalidArgument("warm-start model has K=" + std::to_string(warm->latent_dim()) +
                                  " but the config asks for K=" + std::to_string(config.em.K));
    }
    if (panel.num_steps() < 2) throw InvalidArgument("panel needs at least two timesteps to train");

    std::vector<fs::path> outputs;
    auto save = [&](const FitResult& fit, const std::string& tag) {
        save_model(fit.params, record(outputs, out_dir / ("model_" + tag + ".json")));
        write_text_file(fit.trace.to_csv(), record(outputs, out_dir / ("trace_" + tag + ".csv")));
    };
    switch (config.mode) {
    case TrainMode::Mar: {
        if (warm) {
            ModelParams init = *warm;
            init.mnar_enabled = false;
            init.miss = MissingnessParams::zeros(panel.num_detectors(), config.em.K, tf.dim(), sf.dim());
            save(fit(panel, tf, sf, init, config.em), "mar");
        } else {
            save(fit_mar(panel, tf, sf, config.em), "mar");
        }
        break;
    }
    case TrainMode::Mnar: {
        const LdsParams start =
            warm ? warm->lds : init_params(panel, config.em.K, config.em.seed, tf.dim(), sf.dim()).lds;
        save(fit_mnar_warm(panel, tf, sf, start, config.em), "mnar");
        break;
    }
    case TrainMode::TwoPhase: {
        if (warm) throw InvalidArgument("--warm-start applies to mode mar or mnar, not two_phase");
        const auto result = fit_two_phase(panel, tf, sf, config.em);
        save(result.mar, "mar");
        save(result.mnar, "mnar");
        break;
    }
    }
    Json inputs = {{"panel", panel_path.generic_string()}};
    inputs["warm_start"] = warm_start ? Json(warm_start->generic_string()) : Json(nullptr);
    outputs.push_back(write_manifest(out_dir, "train", train_config_to_json(config), inputs, outputs));
    return outputs;
}

// ---------------------------------------------------------------------------

StratifiedSample eval_windows(const Panel& panel, const EvalConfig& config)
{
    WindowOptions wo;
    wo.lengths = config.lengths;
    wo.horizons = config.horizons;
    wo.stride = config.stride;
    wo.seed = derive_seed(config.seed, "eval/window-lengths");
    const auto candidates = find_candidate_windows(panel, wo);
    const int max_h = *std::max_element(config.horizons.begin(), config.horizons.end());
    return sample_stratified(candidates, config.per_month, derive_seed(config.seed, "eval/sample"), max_h);
}

std::vector<Method> build_methods(const EvalConfig& config, const std::map<std::string, ModelParams>& fixed)
{
    EmConfig em = config.em;
    em.seed = derive_seed(config.seed, "eval/train");
    auto trainer = std::make_shared<TwoPhaseTrainer>(em);
    std::vector<Method> methods;
    for (const auto& name : config.methods) {
        auto it = fixed.find(name);
        if (it != fixed.end()) {
            methods.push_back(lds_method(name, it->second));
        } else if (name == "LOCF") {
            methods.push_back(locf_method());
        } else if (name == "LinearInterp+SeasonalNaive") {
            methods.push_back(interp_seasonal_method());
        } else if (name == "MAR") {
            methods.push_back(trained_mar_method(trainer));
        } else if (name == "MNAR") {
            methods.push_back(trained_mnar_method(trainer));
        } else {
            throw InvalidArgument("unknown method '" + name + "'");
        }
    }
    return methods;
}

std::vector<fs::path> cmd_eval(const fs::path& panel_path, const std::map<std::string, fs::path>& models,
                               const EvalConfig& config, const fs::path& out_dir)
{
    check_eval(config);
    const Panel panel = load_panel(panel_path);
    std::map<std::string, ModelParams> fixed;
    for (const auto& [name, path] : models) {
        if (name != "MAR" && name != "MNAR") throw InvalidArgument("models can replace MAR or MNAR, not '" + name + "'");
        if (std::find(config.methods.begin(), config.methods.end(), name) == config.methods.end())
            throw InvalidArgument("model given for " + name + " but that method is not selected");
        auto params = load_model(path);
        if (params.obs_dim() != panel.num_detectors())
            throw InvalidArgument("model " + path.string() + " has " + std::to_string(params.obs_dim()) +
                                  " detectors but the panel has " + std::to_string(panel.num_detectors()));
        fixed.emplace(name, std::move(params));
    }

    const auto sample = eval_windows(panel, config);
    EvalOptions eo;
    eo.horizons = config.horizons;
    eo.bootstrap_resamples = config.bootstrap_resamples;
    eo.level = config.level;
    eo.seed = derive_seed(config.seed, "eval/bootstrap");
    const auto report = evaluate(panel, sample.windows, build_methods(config, fixed), eo);

    std::vector<fs::path> outputs;
    write_json_file(report_to_json(report), record(outputs, out_dir / "report.json"));
    write_text_file(report_rmse_csv(report), record(outputs, out_dir / "rmse.csv"));
    write_text_file(window_manifest_csv(report), record(outputs, out_dir / "windows.csv"));
    write_text_file(window_errors_csv(report), record(outputs, out_dir / "window_errors.csv"));
    write_text_file(bucket_csv(stratify(report, Stratum::LengthBucket)),
                    record(outputs, out_dir / "length_buckets.csv"));
    write_text_file(bucket_csv(stratify(report, Stratum::HourOfDay)), record(outputs, out_dir / "hour_buckets.csv"));

    Json shortfall = Json::object();
    for (const auto& [month, missing] : sample.shortfall) shortfall[std::to_string(month)] = missing;
    Json model_paths = Json::object();
    for (const auto& [name, path] : models) model_paths[name] = path.generic_string();
    Json inputs = {{"panel", panel_path.generic_string()},
                   {"models", model_paths},
                   {"n_windows", sample.windows.size()},
                   {"month_shortfall", shortfall}};
    outputs.push_back(write_manifest(out_dir, "eval", eval_config_to_json(config), inputs, outputs));
    return outputs;
}

// ---------------------------------------------------------------------------

SweepLeg run_sweep_leg(const SweepConfig& config, double alpha, int seed_id, const fs::path& leg_dir)
{
    SweepLeg leg;
    leg.alpha = alpha;
    leg.seed = seed_id;
    try {
        const std::uint64_t leg_seed = derive_seed(config.seed, "sweep/replicate", static_cast<std::uint64_t>(seed_id));
        SynthConfig sc = config.synth;
        sc.alpha = alpha;
        sc.seed = derive_seed(leg_seed, "generate");
        const auto data = generate(sc);

        EvalConfig ec = config.eval;
        ec.seed = derive_seed(leg_seed, "eval");
        ec.methods = {"MAR", "MNAR"};
        const auto sample = eval_windows(data.panel, ec);
        EvalOptions eo;
        eo.horizons = ec.horizons;
        eo.bootstrap_resamples = ec.bootstrap_resamples;
        eo.level = ec.level;
        eo.seed = derive_seed(ec.seed, "eval/bootstrap");
        const auto report = evaluate(data.panel, sample.windows, build_methods(ec, {}), eo);

        write_json_file(report_to_json(report), leg_dir / "report.json");
        write_text_file(report_rmse_csv(report), leg_dir / "rmse.csv");

        const auto* mar = report.find("MAR");
        const auto* mnar = report.find("MNAR");
        if (sample.windows.empty()) throw std::runtime_error("no evaluation windows");
        for (const auto* m : {mar, mnar})
            for (const auto& w : m->windows)
                if (w.failed) throw std::runtime_error(m->name + " failed on " + w.window_id + ": " + w.note);
        leg.mar_rmse = mar->tasks.at("impute").rmse;
        leg.mnar_rmse = mnar->tasks.at("impute").rmse;
        leg.ok = true;
    } catch (const std::exception& e) {
        leg.ok = false;
        leg.note = e.what();
    }
    return leg;
}

std::vector<SweepRow> summarize_sweep(const SweepConfig& config, const std::vector<SweepLeg>& legs)
{
    std::vector<SweepRow> rows;
    for (double alpha : config.alphas) {
        SweepRow row;
        row.alpha = alpha;
        std::vector<double> mar, mnar, delta;
        for (const auto& leg : legs) {
            if (leg.alpha != alpha) continue;
            ++row.n_legs;
            if (!leg.ok) continue;
            ++row.n_ok;
            mar.push_back(leg.mar_rmse);
            mnar.push_back(leg.mnar_rmse);
            delta.push_back(leg.delta());
        }
        std::tie(row.mar_mean, row.mar_std) = mean_std(mar);
        std::tie(row.mnar_mean, row.mnar_std) = mean_std(mnar);
        std::tie(row.delta_mean, row.delta_std) = mean_std(delta);
        rows.push_back(row);
    }
    return rows;
}

std::string sweep_summary_csv(const std::vector<SweepRow>& rows, std::size_t n_seeds)
{
    std::ostringstream out;
    out << "alpha,n_seeds,mar_rmse_mean,mar_rmse_std,mnar_rmse_mean,mnar_rmse_std,delta_rmse_mean,delta_rmse_std,"
           "complete\n";
    for (const auto& r : rows) {
        auto std_cell = [&](double s) { return r.n_ok >= 2 ? format_double(s) : std::string("n/a"); };
        auto mean_cell = [&](double m) { return r.n_ok >= 1 ? format_double(m) : std::string("n/a"); };
        out << format_double(r.alpha) << ',' << r.n_ok << ',' << mean_cell(r.mar_mean) << ',' << std_cell(r.mar_std)
            << ',' << mean_cell(r.mnar_mean) << ',' << std_cell(r.mnar_std) << ',' << mean_cell(r.delta_mean) << ','
            << std_cell(r.delta_std) << ',' << (r.complete() && static_cast<std::size_t>(r.n_legs) == n_seeds ? "true" : "false")
            << '\n';
    }
    return out.str();
}

std::string sweep_legs_csv(const std::vector<SweepLeg>& legs)
{
    std::ostringstream out;
    out << "alpha,seed,status,mar_rmse,mnar_rmse,delta_rmse,note\n";
    for (const auto& l : legs) {
        std::string note = l.note;
        std::replace(note.begin(), note.end(), ',', ';');
        std::replace(note.begin(), note.end(), '\n', ' ');
        out << format_double(l.alpha) << ',' << l.seed << ',' << (l.ok ? "ok" : "failed") << ','
            << (l.ok ? format_double(l.mar_rmse) : "") << ',' << (l.ok ? format_double(l.mnar_rmse) : "") << ','
            << (l.ok ? format_double(l.delta()) : "") << ',' << note << '\n';
    }
    return out.str();
}

std::vector<fs::path> cmd_sweep(const SweepConfig& config, const fs::path& out_dir)
{
    if (config.alphas.empty() || config.seeds.empty()) throw InvalidArgument("sweep needs at least one alpha and one seed");
    if (config.jobs < 1) throw InvalidArgument("jobs must be at least 1");
    for (double a : config.alphas)
        if (!(a >= 0.0)) throw InvalidArgument("alphas must be nonnegative");
    config.synth.validate();
    check_eval(config.eval);

    struct Task {
        double alpha;
        int seed;
        fs::path dir;
    };
    std::vector<Task> tasks;
    for (double alpha : config.alphas)
        for (int seed : config.seeds)
            tasks.push_back({alpha, seed, out_dir / "legs" / ("alpha_" + alpha_label(alpha)) / ("seed_" + std::to_string(seed))});

    std::vector<SweepLeg> legs(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++)
            legs[i] = run_sweep_leg(config, tasks[i].alpha, tasks[i].seed, tasks[i].dir);
    };
    const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(config.jobs), tasks.size());
    std::vector<std::thread> pool;
    for (std::size_t i = 1; i < n_threads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    const auto rows = summarize_sweep(config, legs);
    std::vector<fs::path> outputs;
    for (const auto& t : tasks) {
        outputs.push_back(t.dir / "report.json");
        outputs.push_back(t.dir / "rmse.csv");
    }
    outputs.erase(std::remove_if(outputs.begin(), outputs.end(), [](const fs::path& p) { return !fs::exists(p); }),
                  outputs.end());
    write_text_file(sweep_summary_csv(rows, config.seeds.size()), record(outputs, out_dir / "summary.csv"));
    write_text_file(sweep_legs_csv(legs), record(outputs, out_dir / "legs.csv"));

    Json jrows = Json::array();
    for (const auto& r : rows)
        jrows.push_back({{"alpha", r.alpha},
                         {"n_ok", r.n_ok},
                         {"n_legs", r.n_legs},
                         {"mar_rmse_mean", r.mar_mean},
                         {"mar_rmse_std", r.mar_std},
                         {"mnar_rmse_mean", r.mnar_mean},
                         {"mnar_rmse_std", r.mnar_std},
                         {"delta_rmse_mean", r.delta_mean},
                         {"delta_rmse_std", r.delta_std},
                         {"complete", r.complete()}});
    Json jlegs = Json::array();
    for (const auto& l : legs)
        jlegs.push_back({{"alpha", l.alpha},
                         {"seed", l.seed},
                         {"ok", l.ok},
                         {"mar_rmse", l.mar_rmse},
                         {"mnar_rmse", l.mnar_rmse},
                         {"delta_rmse", l.delta()},
                         {"note", l.note}});
    write_json_file({{"format", kSweepFormat}, {"rows", jrows}, {"legs", jlegs}}, record(outputs, out_dir / "sweep.json"));
    outputs.push_back(write_manifest(out_dir, "sweep", sweep_config_to_json(config), Json::object(), outputs));
    return outputs;
}

// ---------------------------------------------------------------------------

namespace {

std::string tidy_header(std::initializer_list<const char*> cols)
{
    std::string out;
    for (const char* c : cols) {
        if (!out.empty()) out += ',';
        out += c;
    }
    return out + '\n';
}

void report_eval(const EvalReport& report, const fs::path& dir, std::vector<fs::path>& outputs)
{
    // Imputation RMSE with bootstrap CIs.
    {
        std::ostringstream csv;
        csv << tidy_header({"method", "rmse", "ci_low", "ci_high", "n_windows"});
        PlotSeries s{"impute", {}, {}, {}, {}};
        std::vector<std::string> cats;
        for (const auto& m : report.methods) {
            const auto& t = m.tasks.at("impute");
            csv << m.name << ',' << format_double(t.rmse) << ',' << format_double(t.ci_low) << ','
                << format_double(t.ci_high) << ',' << t.n_windows << '\n';
            cats.push_back(m.name);
            s.y.push_back(t.rmse);
            s.low.push_back(t.ci_low);
            s.high.push_back(t.ci_high);
        }
        write_text_file(csv.str(), record(outputs, dir / "impute_rmse.csv"));
        write_text_file(bar_chart_svg({"Blackout imputation RMSE (95% bootstrap CI)", "method", "RMSE"}, cats, {s}),
                        record(outputs, dir / "impute_rmse.svg"));
    }
    // RMSE against forecast horizon.
    {
        std::ostringstream csv;
        csv << tidy_header({"method", "horizon", "rmse", "ci_low", "ci_high"});
        std::vector<PlotSeries> series;
        for (const auto& m : report.methods) {
            PlotSeries s{m.name, {}, {}, {}, {}};
            for (int h : report.horizons) {
                const auto& t = m.tasks.at(task_name(h));
                csv << m.name << ',' << h << ',' << format_double(t.rmse) << ',' << format_double(t.ci_low) << ','
                    << format_double(t.ci_high) << '\n';
                s.x.push_back(h);
                s.y.push_back(t.rmse);
                s.low.push_back(t.ci_low);
                s.high.push_back(t.ci_high);
            }
            series.push_back(std::move(s));
        }
        write_text_file(csv.str(), record(outputs, dir / "rmse_by_horizon.csv"));
        write_text_file(line_chart_svg({"Post-blackout forecast RMSE", "horizon (steps)", "RMSE"}, series),
                        record(outputs, dir / "rmse_by_horizon.svg"));
    }
    // Bucketed imputation RMSE.
    auto buckets = [&](Stratum by, const std::string& stem, const std::string& title, const std::string& xlabel) {
        const auto rows = stratify(report, by);
        write_text_file(bucket_csv(rows), record(outputs, dir / (stem + ".csv")));
        std::vector<std::string> cats;
        std::vector<PlotSeries> series;
        for (const auto& m : report.methods) {
            PlotSeries s{m.name, {}, {}, {}, {}};
            for (const auto& r : rows) {
                if (r.method != m.name) continue;
                if (series.empty()) cats.push_back(r.bucket);
                s.y.push_back(r.n_cells > 0 ? r.rmse : std::nan(""));
            }
            series.push_back(std::move(s));
        }
        write_text_file(bar_chart_svg({title, xlabel, "RMSE"}, cats, series), record(outputs, dir / (stem + ".svg")));
    };
    buckets(Stratum::LengthBucket, "length_buckets", "Imputation RMSE by blackout length", "length (steps)");
    buckets(Stratum::HourOfDay, "hour_buckets", "Imputation RMSE by blackout start hour", "hour of day");
    // EM objective curves.
    {
        std::ostringstream csv;
        csv << tidy_header({"method", "phase", "iteration", "objective", "gauss_loglik", "miss_loglik"});
        std::vector<PlotSeries> series;
        std::set<std::string> seen;
        for (const auto& m : report.methods) {
            for (const auto& [phase, trace] : m.traces) {
                if (!seen.insert(phase).second) continue;
                PlotSeries s{phase, {}, {}, {}, {}};
                for (const auto& r : trace.iterations) {
                    csv << m.name << ',' << phase << ',' << r.iteration << ',' << format_double(r.objective) << ','
                        << format_double(r.gauss_loglik) << ',' << format_double(r.miss_loglik) << '\n';
                    s.x.push_back(r.iteration);
                    s.y.push_back(r.objective);
                }
                series.push_back(std::move(s));
            }
        }
        write_text_file(csv.str(), record(outputs, dir / "em_objective.csv"));
        write_text_file(line_chart_svg({"EM training objective", "iteration", "log-likelihood"}, series),
                        record(outputs, dir / "em_objective.svg"));
    }
}

void report_sweep(const Json& j, const fs::path& dir, std::vector<fs::path>& outputs)
{
    std::ostringstream csv;
    csv << tidy_header({"alpha", "n_seeds", "delta_rmse_mean", "delta_rmse_std", "mar_rmse_mean", "mnar_rmse_mean"});
    PlotSeries s{"MNAR - MAR", {}, {}, {}, {}};
    for (const auto& r : j.at("rows")) {
        const double alpha = r.at("alpha").get<double>();
        const double mean = r.at("delta_rmse_mean").get<double>();
        const double sd = r.at("delta_rmse_std").get<double>();
        const int n = r.at("n_ok").get<int>();
        csv << format_double(alpha) << ',' << n << ',' << format_double(mean) << ','
            << (n >= 2 ? format_double(sd) : "n/a") << ',' << format_double(r.at("mar_rmse_mean").get<double>()) << ','
            << format_double(r.at("mnar_rmse_mean").get<double>()) << '\n';
        s.x.push_back(alpha);
        s.y.push_back(mean);
        s.low.push_back(n >= 2 ? mean - sd : std::nan(""));
        s.high.push_back(n >= 2 ? mean + sd : std::nan(""));
    }
    write_text_file(csv.str(), record(outputs, dir / "alpha_sweep.csv"));
    write_text_file(line_chart_svg({"MNAR advantage against dependence strength", "alpha", "delta RMSE (MNAR - MAR)"},
                                   {s}, 0.0),
                    record(outputs, dir / "alpha_sweep.svg"));
}

}  // namespace

std::vector<fs::path> cmd_report(const std::vector<fs::path>& inputs, const fs::path& out_dir)
{
    if (inputs.empty()) throw InvalidArgument("report needs at least one input file");
    std::vector<fs::path> outputs;
    std::set<std::string> used;
    Json input_list = Json::array();
    for (const auto& path : inputs) {
        const Json j = read_json_file(path);
        input_list.push_back(path.generic_string());
        fs::path dir = out_dir;
        if (inputs.size() > 1) {
            std::string name = path.stem().string();
            if (path.has_parent_path() && !path.parent_path().filename().empty())
                name = path.parent_path().filename().string() + "_" + name;
            while (!used.insert(name).second) name += "_";
            dir = out_dir / name;
        }
        const std::string format = j.is_object() ? j.value("format", "") : "";
        try {
            if (format == kEvalReportFormat) report_eval(report_from_json(j), dir, outputs);
            else if (format == kSweepFormat) report_sweep(j, dir, outputs);
            else throw ParseError("unrecognized document format '" + format + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ": malformed report: " + e.what());
        } catch (const std::out_of_range& e) {
            throw ParseError(path.string() + ": report lacks an expected task: " + e.what());
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ": " + e.what());
        }
    }
    outputs.push_back(write_manifest(out_dir, "report", Json::object(), {{"reports", input_list}}, outputs));
    return outputs;
}

std::vector<fs::path> cmd_diagnose(const fs::path& panel_path, const DiagnoseConfig& config, const fs::path& out_dir)
{
    check_em(config.em);
    if (!(config.split_fraction > 0.0 && config.split_fraction < 1.0))
        throw InvalidArgument("split_fraction must lie in (0, 1)");
    const Panel panel = load_panel(panel_path);
    const auto tf = build_time_features(panel.timestamps());
    const auto sf = StaticFeatures::none(panel.num_detectors());
    const auto mar = fit_mar(panel, tf, sf, config.em);
    const auto smoothed = e_step(panel, tf, sf, mar.params).smoothed;
    const int split = static_cast<int>(config.split_fraction * panel.num_steps());
    const auto r = missingness_diagnostics(panel, smoothed.means(), tf, split);

    Json j = {{"onset",
               {{"skipped", r.onset.skipped},
                {"note", r.onset.note},
                {"auc", r.onset.auc},
                {"n_onsets", r.onset.n_onsets},
                {"n_train", r.onset.n_train},
                {"n_test", r.onset.n_test}}},
              {"next_step",
               {{"skipped", r.next_step.skipped},
                {"note", r.next_step.note},
                {"auc_observed", r.next_step.auc_observed},
                {"auc_latent", r.next_step.auc_latent},
                {"n_train", r.next_step.n_train},
                {"n_test", r.next_step.n_test},
                {"n_positive", r.next_step.n_positive}}},
              {"structure",
               {{"n_runs", r.structure.n_runs},
                {"median_length", r.structure.median_length},
                {"p75_length", r.structure.p75_length},
                {"max_length", r.structure.max_length},
                {"network_outage_events", r.structure.network_outage_events},
                {"network_outage_mean_length", r.structure.network_outage_mean_length}}}};
    std::vector<fs::path> outputs;
    write_json_file(j, record(outputs, out_dir / "diagnostics.json"));
    outputs.push_back(write_manifest(out_dir, "diagnose", diagnose_config_to_json(config),
                                     {{"panel", panel_path.generic_string()}}, outputs));
    return outputs;
}

}  // namespace blackout
