#include "blackout/serialize.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace blackout {

namespace {

void reject_unknown(const Json& j, std::initializer_list<const char*> keys, const std::string& what)
{
    if (!j.is_object()) throw ParseError(what + " must be a JSON object");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key)) throw ParseError("unknown key '" + key + "' in " + what);
}

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

const Json& require(const Json& j, const char* key, const std::string& what)
{
    if (!j.is_object() || !j.contains(key))
        throw ParseError("missing '" + std::string(key) + "' in " + what);
    return j.at(key);
}

double number(const Json& j, const std::string& what)
{
    if (!j.is_number()) throw ParseError(what + " must be numeric");
    return j.get<double>();
}

VarianceMode variance_mode_from(const std::string& s)
{
    if (s == "moment_match") return VarianceMode::MomentMatch;
    if (s == "constant") return VarianceMode::Constant;
    throw ParseError("unknown variance_mode '" + s + "'");
}

LinearizeAt linearize_from(const std::string& s)
{
    if (s == "predicted") return LinearizeAt::Predicted;
    if (s == "posterior") return LinearizeAt::Posterior;
    throw ParseError("unknown linearize_at '" + s + "'");
}

BlackoutMode blackout_mode_from(const std::string& s)
{
    if (s == "blocks") return BlackoutMode::StateTriggeredBlocks;
    if (s == "pointwise") return BlackoutMode::PointwiseBernoulli;
    throw ParseError("unknown blackout_mode '" + s + "'");
}

std::map<int, double> horizon_map_from(const Json& j, const std::string& what)
{
    std::map<int, double> out;
    if (!j.is_object()) throw ParseError(what + " must be an object keyed by horizon");
    for (const auto& [key, value] : j.items()) out[std::stoi(key)] = number(value, what);
    return out;
}

Json horizon_map_to(const std::map<int, double>& m)
{
    Json j = Json::object();
    for (const auto& [h, v] : m) j[std::to_string(h)] = v;
    return j;
}

Json bucket_rows_to_json(const std::vector<BucketRow>& rows)
{
    Json out = Json::array();
    for (const auto& r : rows)
        out.push_back({{"method", r.method},
                       {"bucket", r.bucket},
                       {"n_windows", r.n_windows},
                       {"n_cells", r.n_cells},
                       {"sse", r.sse},
                       {"rmse", r.rmse}});
    return out;
}

}  // namespace

Json matrix_to_json(const Matrix& m)
{
    Json out = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        out.push_back(std::move(row));
    }
    return out;
}

Matrix matrix_from_json(const Json& j, const std::string& what)
{
    if (!j.is_array()) throw ParseError(what + " must be an array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows > 0 && j[0].is_array() ? static_cast<Eigen::Index>(j[0].size()) : 0;
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw ParseError(what + " has ragged rows");
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = number(row[static_cast<std::size_t>(c)], what);
    }
    return m;
}

Json vector_to_json(const Vector& v)
{
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Vector vector_from_json(const Json& j, const std::string& what)
{
    if (!j.is_array()) throw ParseError(what + " must be an array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], what);
    return v;
}

Json lds_to_json(const LdsParams& p)
{
    return {{"mu0", vector_to_json(p.mu0)},   {"Sigma0", matrix_to_json(p.Sigma0)},
            {"A", matrix_to_json(p.A)},       {"Q", matrix_to_json(p.Q)},
            {"C", matrix_to_json(p.C)},       {"R_diag", vector_to_json(p.R_diag)}};
}

LdsParams lds_from_json(const Json& j)
{
    const std::string what = "lds parameters";
    reject_unknown(j, {"mu0", "Sigma0", "A", "Q", "C", "R_diag"}, what);
    LdsParams p;
    p.mu0 = vector_from_json(require(j, "mu0", what), "mu0");
    p.Sigma0 = matrix_from_json(require(j, "Sigma0", what), "Sigma0");
    p.A = matrix_from_json(require(j, "A", what), "A");
    p.Q = matrix_from_json(require(j, "Q", what), "Q");
    p.C = matrix_from_json(require(j, "C", what), "C");
    p.R_diag = vector_from_json(require(j, "R_diag", what), "R_diag");
    try {
        p.validate();
    } catch (const InvalidArgument& e) {
        throw ParseError(std::string("invalid lds parameters: ") + e.what());
    }
    return p;
}

std::string to_string(VarianceMode mode)
{
    return mode == VarianceMode::MomentMatch ? "moment_match" : "constant";
}

std::string to_string(LinearizeAt at) { return at == LinearizeAt::Predicted ? "predicted" : "posterior"; }

std::string to_string(BlackoutMode mode)
{
    return mode == BlackoutMode::StateTriggeredBlocks ? "blocks" : "pointwise";
}

Json model_to_json(const ModelParams& p)
{
    const auto& m = p.miss;
    return {{"format", kModelFormat},
            {"K", p.latent_dim()},
            {"D", p.obs_dim()},
            {"p", m.Psi.cols()},
            {"q", m.Eta.cols()},
            {"mnar_enabled", p.mnar_enabled},
            {"lds", lds_to_json(p.lds)},
            {"missingness",
             {{"b", vector_to_json(m.b)},
              {"Phi", matrix_to_json(m.Phi)},
              {"Psi", matrix_to_json(m.Psi)},
              {"Eta", matrix_to_json(m.Eta)},
              {"w_miss", m.w_miss},
              {"variance_mode", to_string(m.variance_mode)},
              {"constant_variance", m.constant_variance},
              {"linearize_at", to_string(m.linearize_at)},
              {"skip_artificial", m.skip_artificial}}}};
}

ModelParams model_from_json(const Json& j)
{
    const std::string what = "model document";
    reject_unknown(j, {"format", "K", "D", "p", "q", "mnar_enabled", "lds", "missingness"}, what);
    if (require(j, "format", what) != kModelFormat)
        throw ParseError("unsupported model format (expected " + std::string(kModelFormat) + ")");
    ModelParams p;
    p.lds = lds_from_json(require(j, "lds", what));
    read_if(j, "mnar_enabled", p.mnar_enabled, what);

    const auto& mj = require(j, "missingness", what);
    reject_unknown(mj, {"b", "Phi", "Psi", "Eta", "w_miss", "variance_mode", "constant_variance",
                        "linearize_at", "skip_artificial"},
                   "missingness parameters");
    const int K = p.lds.latent_dim();
    const int D = p.lds.obs_dim();
    const int pdim = require(j, "p", what).get<int>();
    const int qdim = require(j, "q", what).get<int>();
    if (require(j, "K", what).get<int>() != K || require(j, "D", what).get<int>() != D)
        throw ParseError("model K/D header does not match the stored matrices");

    auto& m = p.miss;
    m.b = vector_from_json(require(mj, "b", "missingness"), "b");
    m.Phi = matrix_from_json(require(mj, "Phi", "missingness"), "Phi");
    m.Psi = matrix_from_json(require(mj, "Psi", "missingness"), "Psi");
    m.Eta = matrix_from_json(require(mj, "Eta", "missingness"), "Eta");
    // Zero-width blocks serialize as arrays of empty rows; restore the column count.
    if (m.Psi.cols() == 0) m.Psi.resize(m.Psi.rows(), 0);
    if (m.Eta.cols() == 0) m.Eta.resize(m.Eta.rows(), 0);
    if (m.Psi.rows() == 0 && D > 0) m.Psi.resize(D, pdim);
    if (m.Eta.rows() == 0 && D > 0) m.Eta.resize(D, qdim);
    read_if(mj, "w_miss", m.w_miss, "missingness");
    read_if(mj, "constant_variance", m.constant_variance, "missingness");
    read_if(mj, "skip_artificial", m.skip_artificial, "missingness");
    if (mj.contains("variance_mode")) m.variance_mode = variance_mode_from(mj["variance_mode"].get<std::string>());
    if (mj.contains("linearize_at")) m.linearize_at = linearize_from(mj["linearize_at"].get<std::string>());
    try {
        p.validate(pdim, qdim);
    } catch (const InvalidArgument& e) {
        throw ParseError(std::string("invalid model: ") + e.what());
    }
    return p;
}

Json em_config_to_json(const EmConfig& c)
{
    return {{"n_iterations", c.n_iterations},
            {"grad_steps_per_iter", c.grad_steps_per_iter},
            {"grad_lr", c.grad_lr},
            {"shrink_A", c.shrink_A},
            {"shrink_Q", c.shrink_Q},
            {"trace_cap_Q", c.trace_cap_Q},
            {"K", c.K},
            {"seed", c.seed},
            {"w_miss", c.w_miss},
            {"variance_mode", to_string(c.variance_mode)},
            {"constant_variance", c.constant_variance},
            {"linearize_at", to_string(c.linearize_at)},
            {"skip_artificial", c.skip_artificial}};
}

EmConfig em_config_from_json(const Json& j, EmConfig c)
{
    const std::string what = "EM config";
    reject_unknown(j, {"n_iterations", "grad_steps_per_iter", "grad_lr", "shrink_A", "shrink_Q",
                       "trace_cap_Q", "K", "seed", "w_miss", "variance_mode", "constant_variance",
                       "linearize_at", "skip_artificial"},
                   what);
    read_if(j, "n_iterations", c.n_iterations, what);
    read_if(j, "grad_steps_per_iter", c.grad_steps_per_iter, what);
    read_if(j, "grad_lr", c.grad_lr, what);
    read_if(j, "shrink_A", c.shrink_A, what);
    read_if(j, "shrink_Q", c.shrink_Q, what);
    read_if(j, "trace_cap_Q", c.trace_cap_Q, what);
    read_if(j, "K", c.K, what);
    read_if(j, "seed", c.seed, what);
    read_if(j, "w_miss", c.w_miss, what);
    read_if(j, "constant_variance", c.constant_variance, what);
    read_if(j, "skip_artificial", c.skip_artificial, what);
    if (j.contains("variance_mode")) c.variance_mode = variance_mode_from(j["variance_mode"].get<std::string>());
    if (j.contains("linearize_at")) c.linearize_at = linearize_from(j["linearize_at"].get<std::string>());
    return c;
}

Json synth_config_to_json(const SynthConfig& c)
{
    Json j = {{"K", c.K},
              {"D", c.D},
              {"T", c.T},
              {"alpha", c.alpha},
              {"base_missing_rate", c.base_missing_rate},
              {"blackout_mode", to_string(c.blackout_mode)},
              {"min_block_len", c.min_block_len},
              {"max_block_len", c.max_block_len},
              {"seed", c.seed},
              {"spectral_radius_min", c.spectral_radius_min},
              {"spectral_radius_max", c.spectral_radius_max},
              {"process_noise", c.process_noise},
              {"obs_noise", c.obs_noise},
              {"emission_scale", c.emission_scale},
              {"start_time", c.start_time},
              {"interval_seconds", c.interval_seconds},
              {"allow_unstable", c.allow_unstable}};
    j["true_params"] = c.true_params ? lds_to_json(*c.true_params) : Json(nullptr);
    return j;
}

SynthConfig synth_config_from_json(const Json& j, SynthConfig c)
{
    const std::string what = "synthetic config";
    reject_unknown(j, {"K", "D", "T", "alpha", "base_missing_rate", "blackout_mode", "min_block_len",
                       "max_block_len", "seed", "spectral_radius_min", "spectral_radius_max",
                       "process_noise", "obs_noise", "emission_scale", "start_time",
                       "interval_seconds", "allow_unstable", "true_params"},
                   what);
    read_if(j, "K", c.K, what);
    read_if(j, "D", c.D, what);
    read_if(j, "T", c.T, what);
    read_if(j, "alpha", c.alpha, what);
    read_if(j, "base_missing_rate", c.base_missing_rate, what);
    read_if(j, "min_block_len", c.min_block_len, what);
    read_if(j, "max_block_len", c.max_block_len, what);
    read_if(j, "seed", c.seed, what);
    read_if(j, "spectral_radius_min", c.spectral_radius_min, what);
    read_if(j, "spectral_radius_max", c.spectral_radius_max, what);
    read_if(j, "process_noise", c.process_noise, what);
    read_if(j, "obs_noise", c.obs_noise, what);
    read_if(j, "emission_scale", c.emission_scale, what);
    read_if(j, "start_time", c.start_time, what);
    read_if(j, "interval_seconds", c.interval_seconds, what);
    read_if(j, "allow_unstable", c.allow_unstable, what);
    if (j.contains("blackout_mode"))
        c.blackout_mode = blackout_mode_from(j["blackout_mode"].get<std::string>());
    if (j.contains("true_params")) {
        if (j["true_params"].is_null()) c.true_params.reset();
        else c.true_params = lds_from_json(j["true_params"]);
    }
    return c;
}

// Wall-clock seconds are left out so that reports are reproducible byte for
// byte; they remain in the trace CSV written by training.
Json trace_to_json(const TrainingTrace& trace)
{
    Json its = Json::array();
    for (const auto& r : trace.iterations)
        its.push_back({{"iteration", r.iteration},
                       {"objective", r.objective},
                       {"gauss_loglik", r.gauss_loglik},
                       {"miss_loglik", r.miss_loglik},
                       {"q_cap_fired", r.q_cap_fired},
                       {"spectral_radius_A", r.spectral_radius_A}});
    return {{"warnings", trace.warnings}, {"iterations", its}};
}

TrainingTrace trace_from_json(const Json& j)
{
    TrainingTrace t;
    read_if(j, "warnings", t.warnings, "training trace");
    for (const auto& r : require(j, "iterations", "training trace")) {
        IterationRecord rec;
        read_if(r, "iteration", rec.iteration, "trace row");
        read_if(r, "objective", rec.objective, "trace row");
        read_if(r, "gauss_loglik", rec.gauss_loglik, "trace row");
        read_if(r, "miss_loglik", rec.miss_loglik, "trace row");
        read_if(r, "seconds", rec.seconds, "trace row");
        read_if(r, "q_cap_fired", rec.q_cap_fired, "trace row");
        read_if(r, "spectral_radius_A", rec.spectral_radius_A, "trace row");
        t.iterations.push_back(rec);
    }
    return t;
}

Json window_to_json(const BlackoutWindow& w, const std::vector<std::string>& detector_ids)
{
    Json targets = Json::object();
    for (const auto& [h, t] : w.forecast_targets) targets[std::to_string(h)] = t;
    const auto d = static_cast<std::size_t>(w.detector);
    return {{"window_id", w.window_id},
            {"detector", w.detector},
            {"detector_id", d < detector_ids.size() ? detector_ids[d] : std::string()},
            {"start", w.start},
            {"end", w.end},
            {"length", w.length()},
            {"month", w.month},
            {"start_hour", w.start_hour},
            {"forecast_targets", targets}};
}

BlackoutWindow window_from_json(const Json& j)
{
    const std::string what = "window";
    BlackoutWindow w;
    w.window_id = require(j, "window_id", what).get<std::string>();
    w.detector = require(j, "detector", what).get<int>();
    w.start = require(j, "start", what).get<int>();
    w.end = require(j, "end", what).get<int>();
    read_if(j, "month", w.month, what);
    read_if(j, "start_hour", w.start_hour, what);
    if (j.contains("forecast_targets"))
        for (const auto& [key, value] : j["forecast_targets"].items())
            w.forecast_targets[std::stoi(key)] = value.get<int>();
    if (w.end < w.start) throw ParseError("window " + w.window_id + " ends before it starts");
    return w;
}

Json report_to_json(const EvalReport& report)
{
    Json windows = Json::array();
    for (const auto& w : report.windows) windows.push_back(window_to_json(w, report.detector_ids));

    Json methods = Json::array();
    for (const auto& m : report.methods) {
        Json tasks = Json::object();
        for (const auto& [name, s] : m.tasks)
            tasks[name] = {{"rmse", s.rmse},
                           {"ci_low", s.ci_low},
                           {"ci_high", s.ci_high},
                           {"n_windows", s.n_windows},
                           {"n_points", s.n_points}};
        Json results = Json::array();
        for (const auto& r : m.windows)
            results.push_back({{"window_id", r.window_id},
                               {"failed", r.failed},
                               {"note", r.note},
                               {"impute_sse", r.impute_sse},
                               {"impute_count", r.impute_count},
                               {"imputations", r.imputations},
                               {"forecasts", horizon_map_to(r.forecasts)},
                               {"forecast_sq", horizon_map_to(r.forecast_sq)}});
        Json traces = Json::array();
        for (const auto& [phase, trace] : m.traces) {
            Json t = trace_to_json(trace);
            t["phase"] = phase;
            traces.push_back(std::move(t));
        }
        methods.push_back({{"name", m.name},
                           {"failed_windows", m.failed_windows},
                           {"tasks", tasks},
                           {"windows", results},
                           {"traces", traces}});
    }
    return {{"format", kEvalReportFormat},
            {"horizons", report.horizons},
            {"detector_ids", report.detector_ids},
            {"windows", windows},
            {"methods", methods},
            {"length_buckets", bucket_rows_to_json(stratify(report, Stratum::LengthBucket))},
            {"hour_buckets", bucket_rows_to_json(stratify(report, Stratum::HourOfDay))}};
}

EvalReport report_from_json(const Json& j)
{
    const std::string what = "evaluation report";
    if (!j.is_object() || j.value("format", "") != kEvalReportFormat)
        throw ParseError("not an evaluation report (expected format " + std::string(kEvalReportFormat) + ")");
    try {
        EvalReport r;
        r.horizons = require(j, "horizons", what).get<std::vector<int>>();
        r.detector_ids = require(j, "detector_ids", what).get<std::vector<std::string>>();
        for (const auto& w : require(j, "windows", what)) r.windows.push_back(window_from_json(w));
        for (const auto& mj : require(j, "methods", what)) {
            MethodReport m;
            m.name = require(mj, "name", "method").get<std::string>();
            read_if(mj, "failed_windows", m.failed_windows, "method");
            for (const auto& [name, sj] : require(mj, "tasks", "method").items()) {
                TaskSummary s;
                s.rmse = number(require(sj, "rmse", "task"), "rmse");
                s.ci_low = number(require(sj, "ci_low", "task"), "ci_low");
                s.ci_high = number(require(sj, "ci_high", "task"), "ci_high");
                read_if(sj, "n_windows", s.n_windows, "task");
                read_if(sj, "n_points", s.n_points, "task");
                m.tasks[name] = s;
            }
            for (const auto& wj : require(mj, "windows", "method")) {
                WindowResult w;
                w.window_id = require(wj, "window_id", "window result").get<std::string>();
                read_if(wj, "failed", w.failed, "window result");
                read_if(wj, "note", w.note, "window result");
                read_if(wj, "impute_sse", w.impute_sse, "window result");
                read_if(wj, "impute_count", w.impute_count, "window result");
                read_if(wj, "imputations", w.imputations, "window result");
                if (wj.contains("forecasts")) w.forecasts = horizon_map_from(wj["forecasts"], "forecasts");
                if (wj.contains("forecast_sq"))
                    w.forecast_sq = horizon_map_from(wj["forecast_sq"], "forecast_sq");
                m.windows.push_back(std::move(w));
            }
            if (mj.contains("traces"))
                for (const auto& tj : mj["traces"])
                    m.traces.emplace_back(require(tj, "phase", "trace").get<std::string>(), trace_from_json(tj));
            r.methods.push_back(std::move(m));
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed evaluation report: ") + e.what());
    }
}

std::string report_rmse_csv(const EvalReport& report)
{
    std::ostringstream out;
    out << "method,impute";
    for (int h : report.horizons) out << ',' << task_name(h);
    out << '\n';
    for (const auto& m : report.methods) {
        out << m.name;
        auto cell = [&](const std::string& task) {
            auto it = m.tasks.find(task);
            out << ',' << (it == m.tasks.end() ? std::string() : format_double(it->second.rmse));
        };
        cell("impute");
        for (int h : report.horizons) cell(task_name(h));
        out << '\n';
    }
    return out.str();
}

std::string window_manifest_csv(const EvalReport& report)
{
    std::ostringstream out;
    out << "window_id,detector,detector_id,start,end,length,month,start_hour";
    for (int h : report.horizons) out << ",target_h" << h;
    out << '\n';
    for (const auto& w : report.windows) {
        const auto d = static_cast<std::size_t>(w.detector);
        out << w.window_id << ',' << w.detector << ','
            << (d < report.detector_ids.size() ? report.detector_ids[d] : "") << ',' << w.start << ','
            << w.end << ',' << w.length() << ',' << w.month << ',' << w.start_hour;
        for (int h : report.horizons) {
            auto it = w.forecast_targets.find(h);
            out << ',' << (it == w.forecast_targets.end() ? w.end + h : it->second);
        }
        out << '\n';
    }
    return out.str();
}

std::string window_errors_csv(const EvalReport& report)
{
    std::ostringstream out;
    out << "method,window_id,task,squared_error,count\n";
    for (const auto& m : report.methods) {
        for (const auto& w : m.windows) {
            if (w.failed) continue;
            out << m.name << ',' << w.window_id << ",impute," << format_double(w.impute_sse) << ','
                << w.impute_count << '\n';
            for (const auto& [h, sq] : w.forecast_sq)
                out << m.name << ',' << w.window_id << ',' << task_name(h) << ',' << format_double(sq)
                    << ",1\n";
        }
    }
    return out.str();
}

std::string bucket_csv(const std::vector<BucketRow>& rows)
{
    std::ostringstream out;
    out << "method,bucket,n_windows,n_cells,sse,rmse\n";
    for (const auto& r : rows)
        out << r.method << ',' << r.bucket << ',' << r.n_windows << ',' << r.n_cells << ','
            << format_double(r.sse) << ',' << format_double(r.rmse) << '\n';
    return out.str();
}

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& text, const std::filesystem::path& path)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    out.close();
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

Json read_json_file(const std::filesystem::path& path)
{
    const auto text = read_text_file(path);
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_json_file(const Json& j, const std::filesystem::path& path)
{
    write_text_file(j.dump(2) + "\n", path);
}

void save_model(const ModelParams& p, const std::filesystem::path& path)
{
    write_json_file(model_to_json(p), path);
}

ModelParams load_model(const std::filesystem::path& path) { return model_from_json(read_json_file(path)); }

void save_synth_output(const SynthOutput& out, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    save_panel(out.panel, dir / "panel.csv");
    const Panel truth = Panel::from_values(out.truth, out.panel.timestamps(), out.panel.detector_ids());
    save_panel(truth, dir / "truth.csv");
    Json params = {{"lds", lds_to_json(out.true_params)},
                   {"directions", matrix_to_json(out.directions)},
                   {"onset_intercept", out.onset_intercept}};
    write_json_file(params, dir / "params.json");
}

}  // namespace blackout
