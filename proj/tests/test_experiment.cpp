#include <gtest/gtest.h>
#include <sys/wait.h>

#include "support.hpp"

using namespace semiformer;
using namespace semiformer::experiment;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

/// Hand-rolled generator of arbitrary (not necessarily valid) configs.
struct ConfigGen {
    std::mt19937_64 rng;

    double real() { return std::uniform_real_distribution<double>(-1e3, 1e3)(rng) * std::pow(10.0, pick(-8, 3)); }
    double unit() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }
    int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
    bool coin() { return rng() & 1; }

    std::string word() {
        static const std::string alphabet = "abcXYZ019_-./:= ";
        std::string s(static_cast<std::size_t>(pick(1, 12)), 'a');
        for (auto& ch : s) ch = alphabet[static_cast<std::size_t>(pick(0, static_cast<int>(alphabet.size()) - 1))];
        s.front() = 'p';
        s.back() = 'q';
        return coin() ? s : std::string();
    }

    template <class T>
    std::vector<T> list(std::function<T()> f) {
        std::vector<T> v(static_cast<std::size_t>(pick(0, 4)));
        for (auto& x : v) x = f();
        return v;
    }

    ExperimentConfig operator()() {
        ExperimentConfig c;
        c.output_dir = word();
        auto& d = c.data;
        d.split = {coin() ? "cifar10" : "synthetic" + std::to_string(pick(2, 20)), unit(), rng(), coin()};
        d.split_file = word();
        d.data_dir = word();
        d.train_subset = pick(0, 100000);
        d.eval_subset = pick(0, 100000);
        d.synthetic = {pick(1, 1000), pick(1, 1000), rng(), unit()};
        d.mean = list<double>([&] { return real(); });
        d.stddev = list<double>([&] { return real(); });
        c.weak = {unit(), pick(0, 8)};
        c.strong.base = {unit(), pick(0, 8)};
        c.strong.num_ops = pick(0, 5);
        c.strong.magnitude = unit();
        c.strong.erase_prob = unit();
        c.strong.erase_scale = {unit(), unit()};
        c.strong.erase_ratio = {real(), real()};
        c.strong.erase_fill = static_cast<float>(unit());
        c.strong.jitter = unit();
        auto& t = c.train;
        t.total_epochs = pick(1, 500);
        t.warmup_epochs = pick(0, 50);
        t.labeled_only_epochs = pick(0, 50);
        t.lr_init = unit();
        t.lr_final = unit() * 1e-3;
        t.n_l = pick(1, 256);
        t.mu = pick(0, 10);
        t.tau = unit();
        t.lambda = real();
        t.seed = rng();
        t.deterministic = coin();
        t.eval_every = pick(1, 10);
        t.variant.name = static_cast<objective::Variant>(pick(0, 4));
        t.variant.pseudo_source = static_cast<objective::PseudoSource>(pick(0, 2));
        t.variant.label_smoothing = unit();
        t.weight_decay = unit();
        t.beta1 = unit();
        t.beta2 = unit();
        t.grad_clip = real();
        t.workers = pick(1, 16);
        t.keep_all_checkpoints = coin();
        auto& m = c.model;
        m.transformer = coin();
        m.patch_size = pick(1, 16);
        m.embed_dim = pick(1, 512);
        m.depth = pick(1, 24);
        m.heads = pick(1, 16);
        m.mlp_ratio = real();
        m.conv = coin();
        m.stage_channels = list<int>([&] { return pick(1, 512); });
        m.stage_depths = list<int>([&] { return pick(1, 4); });
        m.downsample_factors = list<int>([&] { return pick(1, 4); });
        const int kind = pick(0, 2);
        if (kind == 0) m.fusion = "default";
        if (kind == 1) m.fusion = "none";
        if (kind == 2) {
            std::vector<models::FusionPoint> pts(static_cast<std::size_t>(pick(1, 3)));
            for (auto& p : pts) p = {pick(0, 9), pick(0, 3), coin() ? 0 : pick(1, 64)};
            m.fusion = format_fusion_points(pts);
        }
        m.upsample = coin() ? models::UpsampleMode::nearest : models::UpsampleMode::bilinear;
        m.order = coin() ? models::FusionOrder::symmetric : models::FusionOrder::sequential;
        m.check_finite = coin();
        return c;
    }
};

int run_cli(const std::string& args, const fs::path& log) {
    const auto cmd = std::string(SEMIFORMER_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

/// A run directory with a config and hand-written metric lines.
fs::path fake_run(const fs::path& root, const std::string& name, objective::Variant v, double fraction,
                  std::uint64_t seed, const std::vector<std::optional<double>>& combined,
                  std::optional<double> top1_T = 40.0) {
    const auto dir = root / name;
    fs::create_directories(dir);
    ExperimentConfig c;
    apply_variant(c, v);
    c.data.split.label_fraction = fraction;
    c.train.seed = seed;
    c.output_dir = dir.string();
    save_config(dir / "config.ini", c);
    std::string text;
    for (std::size_t e = 0; e < combined.size(); ++e) {
        train::MetricRecord r;
        r.epoch = static_cast<int>(e);
        r.step = static_cast<std::int64_t>(10 * (e + 1));
        r.lr = 1e-3;
        r.L = 1.0 / static_cast<double>(e + 1);
        r.L_l = r.L;
        if (v != objective::Variant::sup_only) {
            r.L_u = 0.5;
            r.coverage = 0.1 * static_cast<double>(e + 1);
            r.pseudo_label_accuracy = 70.0;
        }
        r.top1_combined = combined[e];
        if (combined[e]) {
            r.top1_T = top1_T;
            r.top1_C = 45.0;
        }
        text += train::to_json(r).dump() + "\n";
    }
    write_file(dir / "metrics.jsonl", text);
    return dir;
}

}  // namespace

TEST(Config, RoundTripsThroughText) {
    ConfigGen gen{std::mt19937_64(1)};
    for (int i = 0; i < 300; ++i) {
        const auto c = gen();
        const auto text = serialize(c);
        const auto back = parse(text);
        ASSERT_TRUE(back == c) << "case " << i << "\n" << text << "\n---\n" << serialize(back);
        ASSERT_EQ(serialize(back), text);
    }
}

TEST(Config, DefaultsRoundTripAndResolve) {
    const ExperimentConfig c;
    EXPECT_TRUE(parse(serialize(c)) == c);
    const auto r = resolve(c);
    EXPECT_EQ(r.model.fusion, "1:0,3:1,5:2");
    EXPECT_EQ(r.data.mean.size(), 3u);
    EXPECT_TRUE(resolve(r) == r);
}

TEST(Config, ErrorsCarryKeyAndLine) {
    ExperimentConfig c;
    EXPECT_THROW(set_value(c, "train.nope", "1"), ConfigError);
    EXPECT_THROW(set_value(c, "train", "1"), ConfigError);
    EXPECT_THROW(set_value(c, "train.tau", "high"), ConfigError);
    EXPECT_THROW(set_value(c, "train.deterministic", "maybe"), ConfigError);
    EXPECT_THROW(set_value(c, "model.upsample", "cubic"), ConfigError);
    try {
        parse("[train]\ntau = 0.5\n\nbogus = 3\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("train.bogus"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse("tau = 0.5\n"), ConfigError);
    EXPECT_THROW(parse("[train\n"), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/config.ini"), ConfigError);
}

TEST(Config, LaterSourcesOverrideEarlier) {
    ExperimentConfig base;
    base.train.tau = 0.9;
    const auto c = parse("# comment\n[train]\nlambda = 2\n", base);
    EXPECT_EQ(c.train.tau, 0.9);
    EXPECT_EQ(c.train.lambda, 2.0);
}

TEST(Config, FusionPointSyntax) {
    EXPECT_TRUE(parse_fusion_points("none").empty());
    EXPECT_TRUE(parse_fusion_points("").empty());
    const auto p = parse_fusion_points(" 1:0, 3:1:128 ");
    ASSERT_EQ(p.size(), 2u);
    EXPECT_EQ(p[0], (models::FusionPoint{1, 0, 0}));
    EXPECT_EQ(p[1], (models::FusionPoint{3, 1, 128}));
    EXPECT_EQ(format_fusion_points(p), "1:0,3:1:128");
    EXPECT_THROW(parse_fusion_points("1"), ConfigError);
    EXPECT_THROW(parse_fusion_points("1:2:3:4"), ConfigError);
    EXPECT_THROW(parse_fusion_points("a:b"), ConfigError);
}

TEST(Config, VariantsPickTheirStreams) {
    ExperimentConfig c;
    c.train.variant.label_smoothing = 0.1;
    apply_variant(c, objective::Variant::vanilla_cnn);
    EXPECT_FALSE(c.model.transformer);
    EXPECT_TRUE(resolve(c).model.fusion == "none");
    EXPECT_EQ(c.train.variant.label_smoothing, 0.1);
    apply_variant(c, objective::Variant::vanilla_vit);
    EXPECT_FALSE(model_config(c).conv.has_value());
    EXPECT_EQ(c.train.variant.pseudo_source, objective::PseudoSource::transformer);
    apply_variant(c, objective::Variant::conv_labeled);
    EXPECT_TRUE(model_config(c).fusion.empty());
    EXPECT_TRUE(model_config(c).dual());
    apply_variant(c, objective::Variant::semiformer);
    EXPECT_EQ(model_config(c).fusion.size(), 3u);

    c.model.fusion = "1:0";
    apply_variant(c, objective::Variant::conv_labeled);
    EXPECT_NO_THROW(resolve(c));
    c.model.fusion = "1:0";
    EXPECT_THROW(resolve(c), ConfigError);  // decoupled streams cannot fuse
}

TEST(Config, ResolveRejectsBadValues) {
    ExperimentConfig c;
    c.data.split.label_fraction = 0.0;
    EXPECT_THROW(resolve(c), ConfigError);
    c = {};
    c.data.mean = {0.5};
    EXPECT_THROW(resolve(c), ConfigError);
    c = {};
    c.model.heads = 5;
    EXPECT_THROW(resolve(c), ConfigError);
    c = {};
    c.data.split.dataset_id = "imagenet";
    EXPECT_THROW(resolve(c), ConfigError);
}

TEST(Run, WritesConfigBeforeTrainingAndReleasesLock) {
    const auto dir = temp_dir("run_dir");
    auto c = tiny_experiment(dir);
    c.train.total_epochs = 2;
    RunOptions opt;
    int calls = 0;
    opt.after_backward = [&](std::int64_t, bool, models::DualStreamModel&) {
        if (calls++) return;
        EXPECT_TRUE(fs::exists(dir / "config.ini"));
        EXPECT_TRUE(fs::exists(dir / "split.json"));
        EXPECT_TRUE(fs::exists(dir / ".lock"));
        EXPECT_EQ(read_file(dir / "config.ini"), serialize(resolve(c)));
    };
    const auto result = run(c, opt);
    EXPECT_GT(calls, 0);
    EXPECT_FALSE(fs::exists(dir / ".lock"));
    EXPECT_TRUE(fs::exists(dir / "checkpoints" / "latest.pt"));
    const auto stream = train::read_metrics(dir / "metrics.jsonl");
    EXPECT_EQ(stream.metrics.size(), 2u);
    EXPECT_EQ(stream.loss_lines.size(), static_cast<std::size_t>(result.state.global_step));
    EXPECT_EQ(train::checkpoint_config(dir / "checkpoints" / "latest.pt"), serialize(resolve(c)));
    EXPECT_EQ(data::load_split(dir / "split.json").labeled_indices.size(), 40u);

    // resuming a finished run trains nothing and keeps the stream
    opt.after_backward = nullptr;
    opt.resume = true;
    const auto again = run(c, opt);
    EXPECT_TRUE(again.records.empty());
    EXPECT_EQ(train::read_metrics(dir / "metrics.jsonl").metrics.size(), 2u);

    auto changed = c;
    changed.train.tau = 0.3;
    EXPECT_THROW(run(changed, opt), ConfigError);
}

TEST(Run, LockedDirectoryRefused) {
    const auto dir = temp_dir("run_locked");
    write_file(dir / ".lock", "12345\n");
    EXPECT_THROW(run(tiny_experiment(dir)), Error);
    EXPECT_FALSE(fs::exists(dir / "metrics.jsonl"));
    {
        fs::remove(dir / ".lock");
        RunLock lock(dir);
        EXPECT_THROW(RunLock{dir}, Error);
    }
    EXPECT_FALSE(fs::exists(dir / ".lock"));
}

TEST(Run, SplitFileIsUsedAndChecked) {
    const auto dir = temp_dir("run_split");
    auto c = resolve(tiny_experiment(dir / "run"));
    const auto pair = load_data(c);
    auto spec = c.data.split;
    spec.seed = 77;
    data::save_split(data::make_split(spec, pair.train.labels), dir / "s.json");
    c.data.split_file = (dir / "s.json").string();
    const auto p = prepare(c);
    EXPECT_EQ(p.split.spec.seed, 77u);
    EXPECT_TRUE(p.split.has_hidden_labels());

    spec.dataset_id = "synthetic5";
    std::vector<int> five(400);
    for (std::size_t i = 0; i < five.size(); ++i) five[i] = static_cast<int>(i % 5);
    data::save_split(data::make_split(spec, five), dir / "other.json");
    c.data.split_file = (dir / "other.json").string();
    EXPECT_THROW(prepare(c), ConfigError);
}

TEST(Report, SingleRunHasNoComparison) {
    const auto root = temp_dir("report_single");
    const auto run = fake_run(root, "only", objective::Variant::semiformer, 0.1, 1, {std::nullopt, 55.25});
    const auto rep = build_report({run});
    ASSERT_EQ(rep.runs.size(), 1u);
    EXPECT_TRUE(rep.warnings.empty());
    const auto files = write_report(rep, root / "out");
    EXPECT_EQ(files.size(), 6u);
    EXPECT_FALSE(fs::exists(root / "out" / "final_accuracy.svg"));
    const auto md = read_file(root / "out" / "report.md");
    EXPECT_EQ(md.find("## Comparison"), std::string::npos);
    EXPECT_NE(md.find("| 55.25 |"), std::string::npos);
    EXPECT_NE(md.find("step 20"), std::string::npos);
}

TEST(Report, ThreeRunsGiveDeltasAgainstSupervised) {
    const auto root = temp_dir("report_three");
    const auto a = fake_run(root, "sup", objective::Variant::sup_only, 0.1, 1, {50.0});
    const auto b = fake_run(root, "semi1", objective::Variant::semiformer, 0.1, 1, {60.0});
    const auto c = fake_run(root, "semi2", objective::Variant::semiformer, 0.1, 2, {62.0});
    const auto rep = build_report({b, a, c});
    ASSERT_EQ(rep.groups.size(), 2u);
    EXPECT_EQ(rep.groups[rep.reference].condition, "sup");
    EXPECT_EQ(rep.groups[0].runs.size(), 2u);
    EXPECT_DOUBLE_EQ(rep.groups[0].top1_combined, 61.0);
    write_report(rep, root / "out");
    const auto md = read_file(root / "out" / "report.md");
    EXPECT_NE(md.find("## Comparison"), std::string::npos);
    EXPECT_NE(md.find("| semiformer | 10% | semi1, semi2 | 40.00 | 45.00 | 61.00 | +0.00 | +0.00 | +11.00 |"),
              std::string::npos)
        << md;
    EXPECT_TRUE(fs::exists(root / "out" / "final_accuracy.svg"));
    const auto svg = read_file(root / "out" / "final_accuracy.svg");
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("semi2"), std::string::npos);
}

TEST(Report, NumbersAreCopiedVerbatim) {
    const auto root = temp_dir("report_exact");
    const double awkward = 0.1 + 0.2;  // 0.30000000000000004
    const auto r = fake_run(root, "r", objective::Variant::semiformer, 0.1, 1, {12.345678901234567}, awkward);
    const auto line = nlohmann::json::parse(read_file(r / "metrics.jsonl"));
    write_report(build_report({r}), root / "out");
    const auto md = read_file(root / "out" / "report.md");
    const auto csv = read_file(root / "out" / "final_accuracy.csv");
    for (const char* key : {"top1_T", "top1_combined"}) {
        const auto text = line[key].dump();
        EXPECT_NE(md.find("| " + text + " |"), std::string::npos) << key << " " << text;
        EXPECT_NE(csv.find("," + text + ","), std::string::npos) << key << " " << text;
    }
    EXPECT_NE(md.find("0.30000000000000004"), std::string::npos);
}

TEST(Report, LabelRatioSweep) {
    const auto root = temp_dir("report_sweep");
    const auto a = fake_run(root, "f10", objective::Variant::semiformer, 0.1, 1, {60.0});
    const auto b = fake_run(root, "f40", objective::Variant::semiformer, 0.4, 1, {70.5});
    const auto md = markdown(build_report({b, a}));
    EXPECT_NE(md.find("## Label-ratio sweep"), std::string::npos);
    EXPECT_NE(md.find("| semiformer | 40% | 1 | 70.50 | +10.50 |"), std::string::npos) << md;
}

TEST(Report, BrokenRunsBecomeWarnings) {
    const auto root = temp_dir("report_broken");
    const auto good = fake_run(root, "good", objective::Variant::semiformer, 0.1, 1, {60.0});
    const auto corrupt = fake_run(root, "corrupt", objective::Variant::semiformer, 0.1, 2, {61.0});
    write_file(corrupt / "metrics.jsonl", read_file(corrupt / "metrics.jsonl") + "{not json\n");
    const auto unevaluated = fake_run(root, "uneval", objective::Variant::semiformer, 0.1, 3, {std::nullopt});
    const auto aborted = fake_run(root, "aborted", objective::Variant::semiformer, 0.1, 4, {58.0});
    write_file(aborted / "metrics.jsonl",
               read_file(aborted / "metrics.jsonl") + R"({"schema":1,"record":"abort","step":12,"L":null})" + "\n");
    const auto rep = build_report({good, corrupt, unevaluated, aborted, root / "missing"});
    EXPECT_EQ(rep.runs.size(), 2u);
    ASSERT_EQ(rep.warnings.size(), 4u);
    const auto md = markdown(rep);
    EXPECT_NE(md.find("## Warnings"), std::string::npos);
    EXPECT_NE(md.find("aborted"), std::string::npos);
    EXPECT_THROW(write_report(build_report({root / "missing"}), root / "out"), Error);
}

TEST(Cli, ExitCodes) {
    const auto dir = temp_dir("cli");
    const auto log = dir / "log.txt";
    EXPECT_EQ(run_cli("", log), 1);
    EXPECT_EQ(run_cli("--help", log), 0);
    EXPECT_EQ(run_cli("split --dataset synthetic10 --fraction 1.5", log), 1);
    EXPECT_EQ(run_cli("split --dataset imagenet", log), 1);
    EXPECT_EQ(run_cli("split --dataset cifar10 --data-dir " + (dir / "none").string(), log), 2);
    EXPECT_EQ(run_cli("split --dataset synthetic10 --fraction 0.1 -o " + (dir / "s.json").string(), log), 0);
    EXPECT_TRUE(fs::exists(dir / "s.json"));
    EXPECT_EQ(run_cli("split --dataset synthetic10 --fraction 1.0 -o " + (dir / "all.json").string(), log), 0);
    EXPECT_NE(read_file(log).find("only sup_only is meaningful"), std::string::npos);
    EXPECT_EQ(run_cli("train --variant fixmatch -o " + (dir / "r").string(), log), 1);
    EXPECT_EQ(run_cli("train --set train.bogus=1 -o " + (dir / "r").string(), log), 1);
    EXPECT_EQ(run_cli("train --dataset cifar10 --data-dir " + (dir / "none").string() + " -o " + (dir / "r").string(),
                      log),
              2);
    EXPECT_EQ(run_cli("report " + (dir / "missing").string() + " -o " + (dir / "rep").string(), log), 2);
    EXPECT_EQ(run_cli("eval", log), 1);
}

TEST(Cli, TrainEvalReportEndToEnd) {
    const auto dir = temp_dir("cli_e2e");
    const auto log = dir / "log.txt";
    save_config(dir / "tiny.ini", tiny_experiment(dir / "ignored"));
    const auto run_dir = dir / "run";
    ASSERT_EQ(run_cli("train -q -c " + (dir / "tiny.ini").string() + " --epochs 1 --set train.warmup_epochs=0 -o " +
                          run_dir.string(),
                      log),
              0)
        << read_file(log);
    const auto cfg = load_config(run_dir / "config.ini");
    EXPECT_EQ(cfg.train.total_epochs, 1);
    EXPECT_EQ(cfg.output_dir, run_dir.string());
    ASSERT_EQ(run_cli("eval --run " + run_dir.string() + " -o " + (dir / "eval.json").string(), log), 0)
        << read_file(log);
    const auto j = nlohmann::json::parse(read_file(dir / "eval.json"));
    EXPECT_EQ(j["count"], 100);
    const auto stream = train::read_metrics(run_dir / "metrics.jsonl");
    EXPECT_EQ(j["top1_combined"].get<double>(), *stream.metrics.back().top1_combined);
    ASSERT_EQ(run_cli("report " + run_dir.string() + " -o " + (dir / "rep").string(), log), 0) << read_file(log);
    EXPECT_TRUE(fs::exists(dir / "rep" / "report.md"));
}
