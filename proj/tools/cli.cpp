#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "fdnet/config.hpp"
#include "fdnet/errors.hpp"
#include "fdnet/metrics.hpp"
#include "fdnet/trainer.hpp"
#include "fdnet/units.hpp"

namespace fdnet::cli {

namespace fs = std::filesystem;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::vector<std::pair<std::string, std::string>> overrides;
};

/// Pulls "--section.key value" and "--section.key=value" pairs out of args;
/// everything else is left for CLI11.
std::vector<std::string> extract_overrides(const std::vector<std::string>& args, Globals& g) {
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const auto& a = args[i];
        const bool dotted = a.size() > 2 && a.rfind("--", 0) == 0 && a.find('.') != std::string::npos &&
                            a.find('.') < a.find('=');
        if (!dotted) {
            rest.push_back(a);
            continue;
        }
        const auto eq = a.find('=');
        if (eq != std::string::npos) {
            g.overrides.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
        } else {
            if (i + 1 >= args.size()) throw ConfigError(a.substr(2) + ": missing value");
            g.overrides.emplace_back(a.substr(2), args[++i]);
        }
    }
    return rest;
}

bool user_sets_model(const Globals& g, const Json& file) {
    if (file.is_object() && file.contains("model")) return true;
    return std::any_of(g.overrides.begin(), g.overrides.end(),
                       [](const auto& kv) { return kv.first.rfind("model.", 0) == 0; });
}

struct Resolved {
    RunConfig run;
    bool model_from_user = false;
};

Resolved resolve(const Globals& g) {
    Json user = g.config.empty() ? Json::object() : read_json_file(g.config);
    if (!user.is_object()) throw ConfigError("config: top level must be an object");
    const Json schema = RunConfig::defaults().to_json();
    Resolved r;
    r.model_from_user = user_sets_model(g, user);
    for (const auto& [k, v] : g.overrides) apply_override(user, schema, k, v);
    if (g.seed) {
        user["train"]["seed"] = *g.seed;
        user["synth"]["seed"] = *g.seed;
    }
    r.run = RunConfig::from_json(user);
    return r;
}

std::uint64_t split_seed(std::uint64_t seed, std::uint64_t split) {
    // splitmix64 finalizer, so neighbouring seeds give unrelated splits.
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (split + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f) throw IoError("write failed for " + path.string());
}

template <class Fn>
void write_stream(const fs::path& path, Fn&& fn) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    fn(f);
    if (!f) throw IoError("write failed for " + path.string());
}

std::vector<Sequence> load_split(const fs::path& root, const std::string& split) {
    if (!fs::exists(root / "manifest.json")) throw IoError("dataset root " + root.string() + " has no manifest.json");
    return load_sequences(root, split);
}

// ---------------------------------------------------------------------------

void cmd_gen_data(const Globals& g, const std::string& format_flag, std::ostream& out) {
    auto r = resolve(g).run;
    if (!format_flag.empty()) r.data.format = format_flag;
    r.validate();
    const fs::path root = g.out.empty() ? fs::path(r.data.root) : fs::path(g.out);
    const auto format = r.data.format == "grd" ? FrameFormat::kGrd : FrameFormat::kPgm;

    struct Split {
        std::string name;
        int count;
        std::uint64_t seed;
    };
    const std::vector<Split> splits{{r.data.train_split, r.synth.num_sequences, r.synth.seed},
                                    {r.data.val_split, r.data.val_sequences, split_seed(r.synth.seed, 1)},
                                    {r.data.test_split, r.data.test_sequences, split_seed(r.synth.seed, 2)}};
    std::vector<ManifestEntry> manifest;
    ensure_dir(root);
    for (const auto& s : splits) {
        if (s.count == 0) continue;
        SynthConfig sc = r.synth;
        sc.seed = s.seed;
        sc.num_sequences = s.count;
        sc.id_prefix = s.name;
        for (const auto& seq : gen_synthetic(sc)) {
            write_sequence(root, s.name, seq, format);
            manifest.push_back({seq.id, s.name, seq.length(), seq.cadence_minutes});
        }
        out << s.name << ": " << s.count << " sequences\n";
    }
    write_manifest(root, manifest);
    write_text(root / "config.json", r.to_json().dump(2) + "\n");
    out << "wrote " << root.string() << "\n";
}

void cmd_train(const Globals& g, const std::string& data_dir, const std::string& ablation,
               const std::string& resume_path, bool force, std::int64_t log_every, std::ostream& out) {
    auto r = resolve(g).run;
    if (!data_dir.empty()) r.data.root = data_dir;
    if (ablation == "no-deformation") r.model.ablation.use_def_output = false;
    else if (ablation == "no-flow") r.model.ablation.use_flow_output = false;
    else if (ablation == "shared-encoder") r.model.ablation.separate_encoders = false;
    else if (ablation != "none") throw ConfigError("--ablation: unknown variant '" + ablation + "'");
    const fs::path run_dir = g.out.empty() ? fs::path("runs/train") : fs::path(g.out);
    if (r.train.checkpoint_dir.empty()) r.train.checkpoint_dir = (run_dir / "checkpoints").string();
    r.validate();

    std::optional<Checkpoint> resume;
    if (!resume_path.empty()) {
        resume = load_checkpoint(resume_path);
        require_compatible(*resume, r.model, force);
    }
    const fs::path root = r.data.root;
    Dataset data;
    data.train = load_split(root, r.data.train_split);
    data.val = load_sequences(root, r.data.val_split);
    if (r.data.filter_noisy) {
        data.train = filter_noisy(data.train);
        data.val = filter_noisy(data.val);
    }
    if (data.train.empty()) throw ConfigError("training split '" + r.data.train_split + "' is empty");
    out << "training on " << data.train.size() << " sequences (" << data.val.size() << " validation)\n";

    ensure_dir(run_dir);
    write_text(run_dir / "config.json", r.to_json().dump(2) + "\n");
    const auto result = train(r.train, r.model, data, resume, [&](const LogRow& row) {
        if (row.split == "val" || log_every <= 0 || row.iteration % log_every == 0 || row.iteration == 1)
            out << std::setw(6) << row.iteration << ' ' << row.split << " loss " << std::setprecision(6)
                << row.loss_total << " (pixel " << row.loss_pixel << ", gdl " << row.loss_gdl << ")"
                << (row.split == "val" ? " bmse " + std::to_string(row.bmse) : " p_teacher " + std::to_string(row.p_teacher))
                << '\n';
        return true;
    });
    write_stream(run_dir / "metrics.csv", [&](std::ostream& f) { write_log_csv(f, result.log); });
    out << "done at iteration " << result.last.iteration << "; checkpoints in " << r.train.checkpoint_dir << "\n";
}

void cmd_predict(const Globals& g, const std::string& ckpt_path, const std::string& input, int horizon,
                 int input_frames, bool force, std::ostream& out) {
    const auto res = resolve(g);
    const auto& r = res.run;
    const int K = horizon > 0 ? horizon : r.train.horizon;
    const int J = input_frames > 0 ? input_frames : r.train.input_frames;
    if (J < 2) throw ConfigError("--input-frames: need at least 2");
    const auto ckpt = load_checkpoint(ckpt_path);
    if (res.model_from_user) require_compatible(ckpt, r.model, force);
    const auto seq = load_sequence_dir(input);
    if (seq.length() < J)
        throw ConfigError("input has " + std::to_string(seq.length()) + " frames, need at least " + std::to_string(J));
    if (seq.height() != ckpt.model.height || seq.width() != ckpt.model.width)
        throw ConfigError("input frames are " + std::to_string(seq.height()) + "x" + std::to_string(seq.width()) +
                          ", checkpoint model expects " + std::to_string(ckpt.model.height) + "x" +
                          std::to_string(ckpt.model.width));
    const fs::path dir = g.out.empty() ? fs::path("predictions") : fs::path(g.out);
    const auto first = seq.length() - J;
    std::vector<Tensor> in_frames;
    for (std::int64_t t = first; t < seq.length(); ++t) in_frames.push_back(seq.frame(t).reshaped({1, 1, seq.height(), seq.width()}));
    const auto preds = predict(ckpt.model, ckpt.params, Tensor::stack(in_frames), K);

    ensure_dir(dir);
    std::vector<Tensor> strip;
    for (const auto& f : in_frames) strip.push_back(f.reshaped({seq.height(), seq.width()}));
    for (int k = 0; k < K; ++k) {
        const auto frame = preds.select(k).reshaped({seq.height(), seq.width()});
        char name[48];
        std::snprintf(name, sizeof name, "frame_pred_%03d.pgm", k);
        write_pgm(dir / name, frame);
        strip.push_back(frame);
    }
    write_pgm(dir / "strip.pgm", render_strip(strip));
    out << "wrote " << K << " predicted frames and strip.pgm to " << dir.string() << "\n";
}

void cmd_evaluate(const Globals& g, const std::string& ckpt_path, const std::string& split_flag,
                  const std::string& data_dir, std::vector<double> thresholds, const std::string& domain,
                  const std::string& baseline, std::int64_t max_windows, std::ostream& out) {
    const auto res = resolve(g);
    auto r = res.run;
    if (!data_dir.empty()) r.data.root = data_dir;
    if (domain != "dbz" && domain != "normalized") throw ConfigError("--domain: expected dbz or normalized");
    if (baseline != "model" && baseline != "persistence" && baseline != "truth")
        throw ConfigError("--baseline: expected model, persistence or truth");
    const bool persistence = baseline == "persistence", truth = baseline == "truth";
    if (baseline == "model" && ckpt_path.empty()) throw ConfigError("--checkpoint is required with --baseline model");
    const bool dbz = domain == "dbz";
    const WeightScheme scheme = dbz ? WeightScheme::srad_dbz() : r.train.weights;
    if (thresholds.empty()) thresholds = dbz ? std::vector<double>{20, 30, 40, 50} : scheme.thresholds;
    const int J = r.train.input_frames, K = r.train.horizon;

    std::optional<Checkpoint> ckpt;
    if (baseline == "model") {
        ckpt = load_checkpoint(ckpt_path);
        if (res.model_from_user) require_compatible(*ckpt, r.model);
    }
    const std::string split = split_flag.empty() ? r.data.test_split : split_flag;
    const auto seqs = load_split(r.data.root, split);
    if (seqs.empty()) throw ConfigError("split '" + split + "' is empty");
    auto refs = window_index(seqs, J, K, 1);
    if (refs.empty()) throw ConfigError("split '" + split + "' has no windows of length " + std::to_string(J + K));
    if (max_windows > 0 && refs.size() > static_cast<std::size_t>(max_windows)) refs.resize(static_cast<std::size_t>(max_windows));

    auto to_domain = [&](Tensor t) {
        if (dbz)
            for (double& v : t.data()) v = normalized_to_dbz(v);
        return t;
    };
    SkillReport report(K, thresholds);
    constexpr std::size_t kChunk = 8;
    for (std::size_t start = 0; start < refs.size(); start += kChunk) {
        std::vector<std::size_t> picks;
        for (std::size_t i = start; i < std::min(refs.size(), start + kChunk); ++i) picks.push_back(i);
        const auto batch = make_batch(seqs, refs, picks, J, K);
        Tensor preds;
        if (truth) {
            preds = batch.targets;
        } else if (persistence) {
            const Tensor last = batch.inputs.select(J - 1);
            preds = Tensor::stack(std::vector<Tensor>(static_cast<std::size_t>(K), last));
        } else {
            preds = predict(ckpt->model, ckpt->params, batch.inputs, K);
        }
        report.merge(evaluate_rollout(to_domain(preds), to_domain(batch.targets), thresholds, scheme));
    }

    const fs::path dir = g.out.empty() ? fs::path("eval") : fs::path(g.out);
    ensure_dir(dir);
    write_stream(dir / "skill_report.csv", [&](std::ostream& f) { report.write_csv(f); });
    write_stream(dir / "framewise.csv", [&](std::ostream& f) { report.write_framewise_csv(f); });
    out << (baseline == "model" ? "fdnet" : baseline) << " on " << split << " (" << refs.size() << " windows, " << domain
        << ")\n";
    report.write_summary(out);
}

void cmd_render(const Globals& g, const std::string& input, std::int64_t first, std::int64_t count, int gap,
                std::ostream& out) {
    const auto seq = load_sequence_dir(input);
    if (first < 0 || first >= seq.length()) throw ConfigError("--first: outside the sequence");
    const auto last = count > 0 ? std::min(seq.length(), first + count) : seq.length();
    std::vector<Tensor> frames;
    for (std::int64_t t = first; t < last; ++t) frames.push_back(seq.frame(t));
    const fs::path path = g.out.empty() ? fs::path("strip.pgm") : fs::path(g.out);
    write_pgm(path, render_strip(frames, gap));
    out << "wrote " << path.string() << " (" << frames.size() << " frames)\n";
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    Globals g;
    CLI::App app{"FDNet precipitation nowcasting"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--config", g.config, "JSON run configuration");
    app.add_option("--seed", g.seed, "Seed for data generation and training");
    app.add_option("--out", g.out, "Output directory (or file for render)");
    app.footer("Any config key can be overridden as --section.key VALUE, e.g. --train.lr 0.0001");

    std::string format;
    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
    gen->add_option("--format", format, "pgm or grd")->check(CLI::IsMember({"pgm", "grd"}));

    std::string data_dir, ablation = "none", resume;
    bool force = false;
    std::int64_t log_every = 50;
    auto* tr = app.add_subcommand("train", "Train a model");
    tr->add_option("--data", data_dir, "Dataset root");
    tr->add_option("--ablation", ablation, "none, no-deformation, no-flow or shared-encoder");
    tr->add_option("--resume", resume, "Checkpoint to resume from");
    tr->add_flag("--force", force, "Ignore config digest mismatches");
    tr->add_option("--log-every", log_every, "Print every N iterations");

    std::string ckpt, input;
    int horizon = 0, input_frames = 0;
    auto* pr = app.add_subcommand("predict", "Forecast from an observed sequence");
    pr->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
    pr->add_option("--input", input, "Sequence directory")->required();
    pr->add_option("--horizon", horizon, "Frames to predict (default train.horizon)");
    pr->add_option("--input-frames", input_frames, "Observed frames used (default train.input_frames)");
    pr->add_flag("--force", force, "Ignore config digest mismatches");

    std::string split, domain = "dbz", baseline = "model";
    std::vector<double> thresholds;
    std::int64_t max_windows = 0;
    auto* ev = app.add_subcommand("evaluate", "Score forecasts on a dataset split");
    ev->add_option("--checkpoint", ckpt, "Checkpoint file");
    ev->add_option("--split", split, "Split name (default data.test_split)");
    ev->add_option("--data", data_dir, "Dataset root");
    ev->add_option("--thresholds", thresholds, "Event thresholds in the evaluation domain");
    ev->add_option("--domain", domain, "dbz or normalized");
    ev->add_option("--baseline", baseline, "model, persistence or truth (scores the targets against themselves)");
    ev->add_option("--max-windows", max_windows, "Limit the number of windows (0: all)");

    std::int64_t first = 0, count = 0;
    int gap = 2;
    auto* rd = app.add_subcommand("render", "Render a sequence as a horizontal strip");
    rd->add_option("--input", input, "Sequence directory")->required();
    rd->add_option("--first", first, "First frame");
    rd->add_option("--count", count, "Number of frames (0: all)");
    rd->add_option("--gap", gap, "Gap columns between frames");

    try {
        auto args = extract_overrides(raw_args, g);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kValidation;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    }

    try {
        if (gen->parsed()) cmd_gen_data(g, format, out);
        else if (tr->parsed()) cmd_train(g, data_dir, ablation, resume, force, log_every, out);
        else if (pr->parsed()) cmd_predict(g, ckpt, input, horizon, input_frames, force, out);
        else if (ev->parsed()) cmd_evaluate(g, ckpt, split, data_dir, thresholds, domain, baseline, max_windows, out);
        else if (rd->parsed()) cmd_render(g, input, first, count, gap, out);
        return kOk;
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << "\n";
        return kIo;
    } catch (const fs::filesystem_error& e) {
        err << "I/O error: " << e.what() << "\n";
        return kIo;
    } catch (const std::invalid_argument& e) {
        // ConfigError and ShapeError: bad configuration or inputs.
        err << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << "\n";
        return kRuntime;
    }
}

}  // namespace fdnet::cli
