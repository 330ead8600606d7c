#include "blackout/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace blackout;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::string out;

    std::string panel;
    std::string mode;
    std::string warm_start;
    std::vector<std::string> models;
    std::vector<std::string> methods;
    std::vector<double> alphas;
    std::vector<int> seeds;
    std::vector<std::string> inputs;
};

Json config_or_empty(const Options& o, const std::string& command)
{
    return o.config.empty() ? Json::object() : load_config_document(o.config, command);
}

void print_outputs(const std::vector<fs::path>& outputs)
{
    for (const auto& p : outputs) std::cout << p.generic_string() << '\n';
}

std::map<std::string, fs::path> parse_models(const std::vector<std::string>& specs)
{
    std::map<std::string, fs::path> out;
    for (const auto& s : specs) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == s.size())
            throw InvalidArgument("--model expects NAME=PATH, got '" + s + "'");
        out[s.substr(0, eq)] = s.substr(eq + 1);
    }
    return out;
}

int run(const std::string& command, const Options& o)
{
    if (command == "generate") {
        auto cfg = synth_config_from_json(config_or_empty(o, "generate"));
        if (o.seed) cfg.seed = *o.seed;
        print_outputs(cmd_generate(cfg, o.out));
    } else if (command == "train") {
        auto cfg = train_config_from_json(config_or_empty(o, "train"));
        if (o.seed) cfg.em.seed = *o.seed;
        if (!o.mode.empty()) cfg.mode = train_mode_from(o.mode);
        std::optional<fs::path> warm;
        if (!o.warm_start.empty()) warm = o.warm_start;
        print_outputs(cmd_train(o.panel, cfg, warm, o.out));
    } else if (command == "eval") {
        auto cfg = eval_config_from_json(config_or_empty(o, "eval"));
        if (o.seed) cfg.seed = *o.seed;
        if (!o.methods.empty()) cfg.methods = o.methods;
        print_outputs(cmd_eval(o.panel, parse_models(o.models), cfg, o.out));
    } else if (command == "sweep") {
        auto cfg = sweep_config_from_json(config_or_empty(o, "sweep"));
        if (o.seed) cfg.seed = *o.seed;
        if (o.jobs) cfg.jobs = *o.jobs;
        if (!o.alphas.empty()) cfg.alphas = o.alphas;
        if (!o.seeds.empty()) cfg.seeds = o.seeds;
        const auto outputs = cmd_sweep(cfg, o.out);
        std::cout << read_text_file(fs::path(o.out) / "summary.csv");
        std::cout << "wrote " << outputs.size() << " files under " << o.out << '\n';
    } else if (command == "report") {
        print_outputs(cmd_report(std::vector<fs::path>(o.inputs.begin(), o.inputs.end()), o.out));
    } else if (command == "diagnose") {
        auto cfg = diagnose_config_from_json(config_or_empty(o, "diagnose"));
        if (o.seed) cfg.em.seed = *o.seed;
        print_outputs(cmd_diagnose(o.panel, cfg, o.out));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Traffic sensor blackout imputation and forecasting with an MNAR state-space model"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub, bool with_config = true) {
        if (with_config)
            sub->add_option("--config", o.config, "JSON config, or a manifest.json from an earlier run")
                ->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "Output directory")->required();
    };
    auto seeded = [&](CLI::App* sub) { sub->add_option("--seed", o.seed, "Base random seed"); };
    auto panel = [&](CLI::App* sub) {
        sub->add_option("--panel", o.panel, "Panel CSV (timestamp column then one column per detector)")
            ->required()
            ->check(CLI::ExistingFile);
    };

    auto* generate = app.add_subcommand("generate", "Simulate a panel with state-dependent blackouts");
    common(generate);
    seeded(generate);

    auto* train = app.add_subcommand("train", "Fit MAR and/or MNAR parameters by EM");
    common(train);
    seeded(train);
    panel(train);
    train->add_option("--mode", o.mode, "mar, mnar or two_phase")
        ->check(CLI::IsMember({"mar", "mnar", "two_phase"}));
    train->add_option("--warm-start", o.warm_start, "Model JSON whose LDS parameters start the fit")
        ->check(CLI::ExistingFile);

    auto* eval = app.add_subcommand("eval", "Score methods on artificial blackouts");
    common(eval);
    seeded(eval);
    panel(eval);
    eval->add_option("--model", o.models, "NAME=PATH fixed parameters for MAR or MNAR");
    eval->add_option("--methods", o.methods, "Methods to score")->delimiter(',');

    auto* sweep = app.add_subcommand("sweep", "MNAR minus MAR imputation RMSE across dependence strengths");
    common(sweep);
    seeded(sweep);
    sweep->add_option("--jobs", o.jobs, "Parallel legs")->check(CLI::PositiveNumber);
    sweep->add_option("--alphas", o.alphas, "Dependence strengths")->delimiter(',');
    sweep->add_option("--seeds", o.seeds, "Replicate ids")->delimiter(',');

    auto* report = app.add_subcommand("report", "Plots and tidy CSVs from eval reports or sweep results");
    common(report, false);
    report->add_option("inputs", o.inputs, "report.json or sweep.json files")->required()->check(CLI::ExistingFile);

    auto* diagnose = app.add_subcommand("diagnose", "Tests for state-dependent missingness");
    common(diagnose);
    seeded(diagnose);
    panel(diagnose);

    CLI11_PARSE(app, argc, argv);

    try {
        return run(app.get_subcommands().front()->get_name(), o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
