// semiformer: split / train / eval / report.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime abort
// (missing data, non-finite loss, I/O failure).

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "semiformer/semiformer.hpp"

namespace fs = std::filesystem;
using namespace semiformer;

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

struct SplitArgs {
    std::string dataset = "cifar10";
    double fraction = 0.1;
    std::uint64_t seed = 1;
    bool unstratified = false;
    std::string data_dir;
    std::string out = "split.json";
};

struct TrainArgs {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::string> out, variant, pseudo_source, dataset, split, data_dir;
    std::optional<double> tau, lambda, fraction;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
    bool resume = false;
    bool quiet = false;
};

struct EvalArgs {
    std::string run;
    std::string checkpoint;
    std::string data_dir;
    std::string out;
};

struct ReportArgs {
    std::vector<std::string> runs;
    std::string out = "report";
};

int cmd_split(const SplitArgs& a) {
    if (!(a.fraction > 0.0 && a.fraction <= 1.0)) {
        std::cerr << "error: --fraction must lie in (0, 1]\n";
        return kUsage;
    }
    experiment::ExperimentConfig c;
    c.data.split = {a.dataset, a.fraction, a.seed, !a.unstratified};
    c.data.data_dir = a.data_dir;
    data::dataset_info(a.dataset);
    const auto pair = experiment::load_data(c);
    const auto split = data::make_split(c.data.split, pair.train.labels);
    if (split.unlabeled_indices.empty()) std::cerr << "warning: no unlabeled data; only sup_only is meaningful\n";
    data::save_split(split, a.out);
    std::cout << a.out << ": " << split.labeled_indices.size() << " labeled / " << split.unlabeled_indices.size()
              << " unlabeled\n";
    return 0;
}

experiment::ExperimentConfig train_config(const TrainArgs& a) {
    experiment::ExperimentConfig c;
    if (!a.config.empty()) c = experiment::load_config(a.config);
    for (const auto& kv : a.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + kv + "'");
        experiment::set_value(c, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (a.variant) experiment::apply_variant(c, objective::parse_variant(*a.variant));
    if (a.pseudo_source) c.train.variant.pseudo_source = objective::parse_pseudo_source(*a.pseudo_source);
    if (a.tau) c.train.tau = *a.tau;
    if (a.lambda) c.train.lambda = *a.lambda;
    if (a.fraction) c.data.split.label_fraction = *a.fraction;
    if (a.dataset) c.data.split.dataset_id = *a.dataset;
    if (a.split) c.data.split_file = *a.split;
    if (a.data_dir) c.data.data_dir = *a.data_dir;
    if (a.seed) c.train.seed = *a.seed;
    if (a.epochs) c.train.total_epochs = *a.epochs;
    if (a.out) c.output_dir = *a.out;
    return experiment::resolve(c);
}

int cmd_train(const TrainArgs& a) {
    experiment::ExperimentConfig c;
    try {
        c = train_config(a);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    if (!a.quiet)
        std::cout << "run " << c.output_dir << ": " << experiment::condition(c) << ", "
                  << c.data.split.label_fraction * 100 << "% labels of " << c.data.split.dataset_id << ", seed "
                  << c.train.seed << "\n";
    experiment::RunOptions opt;
    opt.progress = a.quiet ? nullptr : &std::cout;
    opt.resume = a.resume;
    try {
        const auto result = experiment::run(c, opt);
        if (!a.quiet) std::cout << "done: best top1_combined " << std::fixed << std::setprecision(2) << result.state.best_metric << "\n";
    } catch (const train::TrainingAborted& e) {
        std::cerr << "aborted: " << e.what() << " (run directory kept: " << c.output_dir << ")\n";
        return kRuntime;
    }
    return 0;
}

int cmd_eval(const EvalArgs& a) {
    fs::path ckpt = a.checkpoint;
    experiment::ExperimentConfig c;
    if (!a.run.empty()) {
        if (ckpt.empty()) ckpt = fs::path(a.run) / "checkpoints" / "latest.pt";
        c = experiment::load_config(fs::path(a.run) / "config.ini");
    } else if (!ckpt.empty()) {
        c = experiment::parse(train::checkpoint_config(ckpt));
    } else {
        std::cerr << "error: eval needs --run or --checkpoint\n";
        return kUsage;
    }
    if (!a.data_dir.empty()) c.data.data_dir = a.data_dir;
    c = experiment::resolve(c);
    const auto pair = experiment::load_data(c);
    models::DualStreamModel model(experiment::model_config(c));
    train::load_model_weights(ckpt, model);
    const auto r = train::evaluate(model, pair.test, c.data.mean, c.data.stddev);
    nlohmann::json j{{"checkpoint", ckpt.string()},
                     {"count", r.count},
                     {"top1_T", r.top1_T ? nlohmann::json(*r.top1_T) : nlohmann::json(nullptr)},
                     {"top1_C", r.top1_C ? nlohmann::json(*r.top1_C) : nlohmann::json(nullptr)},
                     {"top1_combined", r.top1_combined}};
    std::cout << j.dump(2) << "\n";
    if (!a.out.empty()) experiment::write_file(a.out, j.dump(2) + "\n");
    return 0;
}

int cmd_report(const ReportArgs& a) {
    std::vector<fs::path> dirs(a.runs.begin(), a.runs.end());
    const auto rep = experiment::build_report(dirs);
    for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
    if (rep.runs.empty()) {
        std::cerr << "error: none of the given runs could be read\n";
        return kRuntime;
    }
    for (const auto& f : experiment::write_report(rep, a.out)) std::cout << f.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-supervised dual-stream (conv + transformer) image classification experiments"};
    app.require_subcommand(1);
    app.footer("Dataset archives are read from $SEMIFORMER_DATA_DIR (default ./data).\n"
               "Config precedence: defaults < --config file < --set < dedicated flags.");

    SplitArgs sa;
    auto* split = app.add_subcommand("split", "Create a labeled/unlabeled split file");
    split->add_option("--dataset", sa.dataset, "cifar10 | cifar100 | synthetic<K>")->capture_default_str();
    split->add_option("--fraction", sa.fraction, "Labeled fraction in (0, 1]")->capture_default_str();
    split->add_option("--seed", sa.seed, "Split seed")->capture_default_str();
    split->add_flag("--unstratified", sa.unstratified, "Sample labels without per-class stratification");
    split->add_option("--data-dir", sa.data_dir, "Dataset directory");
    split->add_option("-o,--out", sa.out, "Output JSON file")->capture_default_str();

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Train one method variant into a run directory");
    train_cmd->add_option("-c,--config", ta.config, "Config file")->check(CLI::ExistingFile);
    train_cmd->add_option("--set", ta.sets, "Override a config key: section.key=value (repeatable)");
    train_cmd->add_option("-o,--out", ta.out, "Run directory");
    train_cmd->add_option("--variant", ta.variant, "sup | vanilla-cnn | vanilla-vit | conv-labeled | semiformer");
    train_cmd->add_option("--pseudo-source", ta.pseudo_source, "Teacher for pseudo labels: cnn | transformer | fused");
    train_cmd->add_option("--tau", ta.tau, "Confidence threshold");
    train_cmd->add_option("--lambda", ta.lambda, "Unlabeled loss weight");
    train_cmd->add_option("--fraction", ta.fraction, "Labeled fraction");
    train_cmd->add_option("--dataset", ta.dataset, "Dataset id");
    train_cmd->add_option("--split", ta.split, "Split file from `split`")->check(CLI::ExistingFile);
    train_cmd->add_option("--data-dir", ta.data_dir, "Dataset directory");
    train_cmd->add_option("--seed", ta.seed, "Training seed");
    train_cmd->add_option("--epochs", ta.epochs, "Total epochs");
    train_cmd->add_flag("--resume", ta.resume, "Continue from the run directory's latest checkpoint");
    train_cmd->add_flag("-q,--quiet", ta.quiet, "No progress output");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test set");
    eval->add_option("--run", ea.run, "Run directory (uses its config and latest checkpoint)");
    eval->add_option("--checkpoint", ea.checkpoint, "Checkpoint file");
    eval->add_option("--data-dir", ea.data_dir, "Dataset directory");
    eval->add_option("-o,--out", ea.out, "Also write the JSON result here");

    ReportArgs ra;
    auto* report = app.add_subcommand("report", "Summarise run directories into tables and plots");
    report->add_option("runs", ra.runs, "Run directories")->required();
    report->add_option("-o,--out", ra.out, "Output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsage;
    }

    try {
        if (*split) return cmd_split(sa);
        if (*train_cmd) return cmd_train(ta);
        if (*eval) return cmd_eval(ea);
        if (*report) return cmd_report(ra);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const SplitError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kUsage;
}
