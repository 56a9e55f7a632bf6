#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "casp/bench.hpp"
#include "casp/config.hpp"
#include "casp/objectives.hpp"
#include "casp/synth.hpp"
#include "casp/train.hpp"

namespace fs = std::filesystem;
using namespace casp;

namespace {

struct Globals {
    std::string config;
    std::optional<uint64_t> seed;
    std::string out = "out";
};

RunConfig resolve(const Globals& g) {
    RunConfig rc = g.config.empty() ? RunConfig{} : load_run_config(g.config);
    if (g.config.empty()) rc.apply_seed(rc.seed);
    if (g.seed) rc.apply_seed(*g.seed);
    return rc;
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    write_file(path, std::vector<uint8_t>(text.begin(), text.end()));
}

void gen_data(const Globals& g) {
    const auto rc = resolve(g);
    const fs::path data = fs::path(g.out) / "data";
    for (const auto& [split, cfg] : {std::pair{"train", rc.train_data}, std::pair{"val", rc.val_data}}) {
        const auto dir = data / split;
        if (fs::exists(dir)) fs::remove_all(dir);
        save_dataset(dir, cfg, synth_generate(cfg));
        std::cout << "wrote " << cfg.clips << " " << to_string(cfg.mode) << " clips to " << dir.string() << "\n";
    }
}

Dataset data_split(const Globals& g, const RunConfig& rc, const std::string& split) {
    const auto dir = fs::path(g.out) / "data" / split;
    if (fs::exists(dir / "manifest.json")) return load_dataset(dir);
    const auto& cfg = split == "train" ? rc.train_data : rc.val_data;
    save_dataset(dir, cfg, synth_generate(cfg));
    std::cout << "generated " << split << " split at " << dir.string() << "\n";
    return load_dataset(dir);
}

void train(const Globals& g, const std::string& resume, std::optional<int64_t> steps) {
    auto rc = resolve(g);
    if (steps) rc.train.steps = *steps;
    const auto train_set = prepare(data_split(g, rc, "train"), rc.model, rc.train_data.fps);
    Trainer trainer(rc.model, rc.train);
    if (!resume.empty()) trainer.load(resume);

    const fs::path out(g.out);
    const auto log_path = out / "reports" / "train_log.csv";
    fs::create_directories(log_path.parent_path());
    std::ofstream log(log_path, resume.empty() ? std::ios::trunc : std::ios::app);
    if (resume.empty()) log << "step,loss,kl,cc,sim\n";
    log.precision(8);
    const auto t0 = std::chrono::steady_clock::now();
    const auto run_json = to_json(rc);
    trainer.run(train_set, rc.train.steps, [&](const StepLog& s) {
        log << s.step << ',' << s.loss << ',' << s.kl << ',' << s.cc << ',' << s.sim << '\n';
        if (s.step % rc.train.log_every == 0 || s.step == rc.train.steps) {
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::printf("step %lld  loss %.4f  kl %.4f  cc %.4f  sim %.4f  (%.0f s)\n", static_cast<long long>(s.step),
                        s.loss, s.kl, s.cc, s.sim, secs);
            std::fflush(stdout);
        }
        if (rc.train.checkpoint_every > 0 && s.step % rc.train.checkpoint_every == 0) {
            char name[32];
            std::snprintf(name, sizeof name, "step_%06lld", static_cast<long long>(s.step));
            trainer.save(out / "ckpt" / name, run_json);
        }
    });
    trainer.save(out / "ckpt" / "final", run_json);
    std::cout << "checkpoint written to " << (out / "ckpt" / "final").string() << "\n";
}

void eval(const Globals& g, std::string ckpt, std::string data_dir, bool dump_maps) {
    const fs::path out(g.out);
    if (ckpt.empty()) ckpt = (out / "ckpt" / "final").string();
    auto model = load_model(ckpt);
    if (data_dir.empty()) {
        data_split(g, resolve(g), "val");
        data_dir = (out / "data" / "val").string();
    }
    const auto manifest_bytes = read_file(fs::path(data_dir) / "manifest.json");
    const auto manifest = nlohmann::json::parse(manifest_bytes.begin(), manifest_bytes.end());
    const auto data = prepare(load_dataset(data_dir), model.config, manifest.at("fps").get<double>());

    std::vector<Tensor<float>> preds;
    for (const auto& p : data) preds.push_back(predict(*model.net, p));
    const auto report = evaluate_maps(preds, data);
    const auto name = fs::path(data_dir).filename().string();
    write_text(out / "reports" / "eval.csv", report.csv(name));
    if (dump_maps) {
        for (std::size_t i = 0; i < data.size(); ++i) {
            write_cspt(out / "reports" / "maps" / (data[i].id + ".cspt"), preds[i]);
            write_pgm(out / "reports" / "maps" / (data[i].id + ".pgm"), preds[i], true);
        }
    }
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    const auto m = report.mean();
    std::printf("%s: CC %.4f  NSS %.4f  AUC-J %.4f  SIM %.4f  (%zu clips)\n", name.c_str(), m.cc, m.nss, m.auc, m.sim,
                report.rows.size());
}

void metrics(const Globals& g, const std::string& pred_path, const std::string& gt_path, const std::string& fix_path) {
    const auto pred = read_cspt(pred_path);
    const auto gt = read_cspt(gt_path);
    if (pred.shape() != gt.shape()) {
        throw DimensionError("prediction " + shape_str(pred.shape()) + " and ground truth " + shape_str(gt.shape()) +
                             " differ in shape");
    }
    const auto cc = metric_cc(pred, gt);
    std::ostringstream row;
    row.precision(6);
    row << std::fixed << "pred,gt,CC,NSS,AUC-J,SIM,KL\n" << pred_path << ',' << gt_path << ',' << cc.value << ',';
    if (!fix_path.empty()) {
        const auto fix = read_cspt(fix_path);
        const auto nss = metric_nss(pred, fix);
        row << nss.value << ',' << metric_auc_judd(pred, fix);
        if (nss.warning) std::cerr << "warning: " << *nss.warning << "\n";
    } else {
        row << ',';
    }
    row << ',' << metric_sim(pred, gt) << ',' << metric_kl(pred, gt) << '\n';
    if (cc.warning) std::cerr << "warning: " << *cc.warning << "\n";
    write_text(fs::path(g.out) / "reports" / "metrics.csv", row.str());
    std::cout << row.str();
}

void bench(const Globals& g, std::vector<int64_t> tokens, std::optional<int64_t> channels) {
    const auto rc = resolve(g);
    if (tokens.empty()) tokens = rc.bench.tokens;
    const auto res = bench_attention(tokens, channels.value_or(rc.bench.channels), rc.seed);
    write_text(fs::path(g.out) / "reports" / "bench_attn.csv", res.csv());
    std::cout << res.csv();
    std::printf("slope quadratic %.3f  linear %.3f  max linear/explicit gap %.2e  linear avoids LxL: %s\n",
                res.slope_quadratic, res.slope_linear, res.max_rel_diff, res.linear_avoids_square ? "yes" : "no");
}

void sweep(const Globals& g, std::optional<double> alpha, std::optional<int64_t> iterations,
           std::optional<int64_t> instances) {
    const auto rc = resolve(g);
    auto cfg = rc.sweep;
    if (alpha) cfg.alpha = *alpha;
    if (iterations) cfg.max_iterations = *iterations;
    if (instances) cfg.instances = *instances;
    if (!(cfg.alpha > 0) || cfg.max_iterations < 0 || cfg.instances < 1) {
        throw ConfigError("cpc-sweep needs alpha > 0, iterations >= 0 and instances >= 1");
    }
    const auto res = cpc_sweep(rc.model, cfg, rc.seed);
    write_text(fs::path(g.out) / "reports" / "cpc_sweep.csv", res.csv());
    std::cout << res.csv();
    std::printf("alpha %.4g: %lld of %lld instances nonincreasing over %lld iterations\n", cfg.alpha,
                static_cast<long long>(res.nonincreasing), static_cast<long long>(cfg.instances),
                static_cast<long long>(cfg.max_iterations));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Audio-visual saliency prediction toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Seed for data, initialisation and shuffling");
    app.add_option("--out", g.out, "Output root holding data/, ckpt/ and reports/")->capture_default_str();

    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic train and validation splits");

    auto* tr = app.add_subcommand("train", "Train a model on out/data/train");
    std::string resume;
    std::optional<int64_t> steps;
    tr->add_option("--resume", resume, "Checkpoint directory to continue from")->check(CLI::ExistingDirectory);
    tr->add_option("--steps", steps, "Total optimizer steps (overrides the config)")->check(CLI::NonNegativeNumber);

    auto* ev = app.add_subcommand("eval", "Score a checkpoint on a dataset split");
    std::string ckpt, data_dir;
    bool dump_maps = false;
    ev->add_option("--ckpt", ckpt, "Checkpoint directory (default: <out>/ckpt/final)");
    ev->add_option("--data", data_dir, "Dataset directory (default: <out>/data/val, generated when missing)");
    ev->add_flag("--maps", dump_maps, "Also write predicted maps as CSPT and PGM");

    auto* me = app.add_subcommand("metrics", "Score one predicted map file against ground truth");
    std::string pred_path, gt_path, fix_path;
    me->add_option("--pred", pred_path, "Predicted map (CSPT)")->required()->check(CLI::ExistingFile);
    me->add_option("--gt", gt_path, "Ground-truth dense map (CSPT)")->required()->check(CLI::ExistingFile);
    me->add_option("--fixations", fix_path, "Binary fixation map (CSPT) for NSS and AUC-J")->check(CLI::ExistingFile);

    auto* be = app.add_subcommand("bench-attn", "Count multiply-adds and memory of quadratic vs linear attention");
    std::vector<int64_t> tokens;
    std::optional<int64_t> channels;
    be->add_option("--tokens", tokens, "Token counts L")->check(CLI::PositiveNumber);
    be->add_option("--channels", channels, "Channel width C")->check(CLI::PositiveNumber);

    auto* sw = app.add_subcommand("cpc-sweep", "Trace CPC prediction error over inference iterations");
    std::optional<double> alpha;
    std::optional<int64_t> iterations, instances;
    sw->add_option("--alpha", alpha, "Inference step size");
    sw->add_option("--iterations", iterations, "Largest iteration count N");
    sw->add_option("--instances", instances, "Number of random instances");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (gen->parsed()) gen_data(g);
        if (tr->parsed()) train(g, resume, steps);
        if (ev->parsed()) eval(g, ckpt, data_dir, dump_maps);
        if (me->parsed()) metrics(g, pred_path, gt_path, fix_path);
        if (be->parsed()) bench(g, tokens, channels);
        if (sw->parsed()) sweep(g, alpha, iterations, instances);
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DimensionError& e) {
        std::cerr << "dimension error: " << e.what() << "\n";
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 1;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
