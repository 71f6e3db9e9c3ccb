#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "sf2f/checkpoint.hpp"
#include "sf2f/dataset.hpp"
#include "sf2f/eval.hpp"
#include "sf2f/io.hpp"
#include "sf2f/phantom.hpp"
#include "sf2f/volume.hpp"

namespace fs = std::filesystem;
using namespace sf2f;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Flags shared by every command that builds a RunConfig.
struct RunFlags {
    std::string config_file;
    std::optional<std::uint64_t> seed;
    std::string slices;
    bool no_augment = false;
    bool no_normalize = false;
    bool no_vote = false;
    std::string branch;
    std::string model = "toy";
    std::optional<int> epochs;
    std::optional<double> lr;
    std::optional<std::size_t> batch_size;
    std::string init;
    bool quiet = false;

    void add_to(CLI::App& cmd) {
        cmd.add_option("--config", config_file, "key=value configuration file")->check(CLI::ExistingFile);
        cmd.add_option("--seed", seed, "seed for folds, initialization, shuffling and augmentation");
        cmd.add_option("--slices", slices, "1-based coronal span lo:hi");
        cmd.add_flag("--no-augment", no_augment, "disable flips and rotations");
        cmd.add_flag("--no-normalize", no_normalize, "skip per-slice min-max normalization");
        cmd.add_flag("--no-vote", no_vote, "score slices instead of voted subjects");
        cmd.add_option("--branch", branch, "both, vit or gfnet")->check(CLI::IsMember({"both", "vit", "gfnet"}));
        cmd.add_option("--model", model, "toy or full")->check(CLI::IsMember({"toy", "full"}));
        cmd.add_option("--epochs", epochs, "training epochs");
        cmd.add_option("--lr", lr, "initial learning rate");
        cmd.add_option("--batch-size", batch_size, "mini-batch size");
        cmd.add_option("--init", init, "checkpoint to initialize weights from")->check(CLI::ExistingFile);
        cmd.add_flag("-q,--quiet", quiet, "no per-epoch progress on stderr");
    }

    // Defaults, then the config file, then explicit flags.
    RunConfig resolve() const {
        RunConfig cfg = model == "full" ? RunConfig::full_scale() : RunConfig::toy();
        if (!config_file.empty()) cfg.apply(read_key_values_file(config_file));
        KeyValues kv;
        if (seed) {
            kv["train.seed"] = std::to_string(*seed);
            kv["run.fold_seed"] = std::to_string(*seed);
        }
        if (!slices.empty()) kv["run.slices"] = slices;
        if (no_augment) kv["train.augment"] = "0";
        if (no_normalize) kv["train.normalize"] = "0";
        if (no_vote) kv["run.vote"] = "0";
        if (!branch.empty()) kv["model.branch"] = branch;
        if (epochs) kv["train.epochs"] = std::to_string(*epochs);
        if (lr) kv["train.lr_max"] = format_double(*lr);
        if (batch_size) kv["train.batch_size"] = std::to_string(*batch_size);
        if (!init.empty()) kv["train.init_checkpoint"] = init;
        cfg.apply(kv);
        cfg.train.majority_vote = cfg.vote;
        cfg.model.validate();
        cfg.train.validate();
        return cfg;
    }

    FoldCallback progress() const {
        if (quiet) return {};
        return [](std::size_t fold, const EpochLog& e) {
            std::cerr << "fold " << fold << " epoch " << e.epoch << " lr " << e.lr << " loss " << e.train_loss
                      << " train_acc " << e.train_acc << " val_acc " << e.val_acc << "\n";
        };
    }
};

SliceOptions slice_options(const RunConfig& cfg) {
    return SliceOptions{cfg.model.image_height, cfg.model.image_width, cfg.train.normalize};
}

std::vector<SubjectSlices> load_run_subjects(const std::string& manifest, const RunConfig& cfg, int lo, int hi) {
    const Manifest m = read_manifest(manifest);
    const auto rows = m.for_modality(cfg.modality);
    if (rows.empty()) throw DataError("manifest has no rows for modality '" + cfg.modality + "'");
    return load_subjects(rows, lo, hi, slice_options(cfg));
}

FoldPlan plan_for(const std::vector<SubjectSlices>& subjects, const RunConfig& cfg, const std::string& plan_file) {
    if (plan_file.empty()) return make_folds(subject_infos(subjects), cfg.fold_seed, cfg.k, cfg.val_fraction);
    const auto bytes = read_file_bytes(plan_file);
    FoldPlan plan = FoldPlan::from_json(std::string(bytes.begin(), bytes.end()));
    check_fold_plan(plan, subject_infos(subjects));
    return plan;
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    if (const fs::path parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::pair<int, int> parse_span(const std::string& s) {
    RunConfig tmp;
    tmp.apply({{"run.slices", s}});
    return {tmp.slice_lo, tmp.slice_hi};
}

std::string metrics_line(const Metrics& m) {
    std::ostringstream os;
    os.precision(4);
    os << "ACC " << m.acc << "  SEN " << m.sen << "  SPE " << m.spe << "  PRE " << m.pre << "  F1 " << m.f1;
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-branch spatial/spectral transformer for coronal-slice classification"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "sf2f 1.0");

    // phantom
    PhantomOptions po;
    std::string phantom_out;
    auto* phantom = app.add_subcommand("phantom", "generate a synthetic phantom dataset (RVOL volumes + manifest.csv)");
    phantom->add_option("--out", phantom_out, "output directory")->required();
    phantom->add_option("--subjects", po.n_subjects, "number of subjects (even, multiple of 2*centers)");
    phantom->add_option("--centers", po.n_centers, "number of centers");
    phantom->add_option("--seed", po.seed, "generator seed");
    phantom->add_option("--noise", po.noise_std, "voxel noise std of the first center");
    phantom->add_option("--signal", po.signal_fraction, "grating amplitude relative to background");
    phantom->add_option("--extents", po.extents, "volume size X Y Z (Y must cover the slab)")->delimiter(',');

    // prepare
    std::string prep_manifest, prep_out;
    auto* prepare = app.add_subcommand("prepare", "validate a manifest and convert its NIfTI volumes to RVOL");
    prepare->add_option("--manifest", prep_manifest, "input manifest.csv")->required()->check(CLI::ExistingFile);
    prepare->add_option("--out", prep_out, "output directory")->required();

    // split
    std::string split_manifest, split_out, split_modality;
    std::uint64_t split_seed = 0;
    std::size_t split_k = 5;
    auto* split = app.add_subcommand("split", "emit a subject-level stratified fold plan as JSON");
    split->add_option("--manifest", split_manifest, "manifest.csv")->required()->check(CLI::ExistingFile);
    split->add_option("--seed", split_seed, "fold seed");
    split->add_option("--folds", split_k, "number of folds");
    split->add_option("--modality", split_modality, "restrict to one modality");
    split->add_option("--out", split_out, "output JSON file (stdout when omitted)");

    // train
    RunFlags train_flags;
    std::string train_manifest, train_plan, train_out, train_log;
    std::size_t train_fold_index = 0;
    auto* train_cmd = app.add_subcommand("train", "train one fold and save a checkpoint");
    train_cmd->add_option("--manifest", train_manifest, "manifest.csv")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--fold", train_fold_index, "fold index");
    train_cmd->add_option("--plan", train_plan, "fold plan JSON (built from the seed when omitted)");
    train_cmd->add_option("--out", train_out, "checkpoint path")->required();
    train_cmd->add_option("--log", train_log, "per-epoch log JSON");
    train_flags.add_to(*train_cmd);

    // eval
    RunFlags eval_flags;
    std::string eval_manifest, eval_plan, eval_ckpt, eval_out;
    std::size_t eval_fold = 0;
    auto* eval = app.add_subcommand("eval", "score one fold's test subjects with a checkpoint");
    eval->add_option("--manifest", eval_manifest, "manifest.csv")->required()->check(CLI::ExistingFile);
    eval->add_option("--fold", eval_fold, "fold index");
    eval->add_option("--plan", eval_plan, "fold plan JSON (built from the seed when omitted)");
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    eval->add_option("--out", eval_out, "report JSON (stdout when omitted)");
    eval_flags.add_to(*eval);

    // cv
    RunFlags cv_flags;
    std::string cv_manifest, cv_plan, cv_out;
    bool cv_shuffle = false;
    auto* cv = app.add_subcommand("cv", "full k-fold cross-validation run");
    cv->add_option("--manifest", cv_manifest, "manifest.csv")->required()->check(CLI::ExistingFile);
    cv->add_option("--plan", cv_plan, "fold plan JSON (built from the seed when omitted)");
    cv->add_option("--out", cv_out, "output directory for report.json and metrics.csv")->required();
    cv->add_flag("--shuffle-labels", cv_shuffle, "permute subject labels (chance-level control)");
    cv_flags.add_to(*cv);

    // sweep
    RunFlags sweep_flags;
    std::string sweep_manifest, sweep_out;
    std::vector<std::string> sweep_spans;
    auto* sweep = app.add_subcommand("sweep", "cross-validation per slice span with a shared fold plan");
    sweep->add_option("--manifest", sweep_manifest, "manifest.csv")->required()->check(CLI::ExistingFile);
    sweep->add_option("--spans", sweep_spans, "spans lo:hi, in output order")->required()->delimiter(',');
    sweep->add_option("--out", sweep_out, "output directory for sweep.json and sweep.csv")->required();
    sweep_flags.add_to(*sweep);

    // predict
    std::string pred_ckpt, pred_volume, pred_slices = "111:125", pred_out;
    bool pred_no_normalize = false;
    auto* predict = app.add_subcommand("predict", "classify one volume and report per-slice votes");
    predict->add_option("--checkpoint", pred_ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    predict->add_option("--volume", pred_volume, ".nii, .nii.gz or .rvol volume")->required()->check(CLI::ExistingFile);
    predict->add_option("--slices", pred_slices, "1-based coronal span lo:hi");
    predict->add_flag("--no-normalize", pred_no_normalize, "skip per-slice min-max normalization");
    predict->add_option("--out", pred_out, "output JSON (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*phantom) {
            const Manifest m = write_phantom_dataset(po, phantom_out);
            std::cerr << "wrote " << m.rows.size() << " volumes to " << phantom_out << "\n";
        } else if (*prepare) {
            const Manifest in = read_manifest(prep_manifest);
            fs::create_directories(prep_out);
            Manifest out;
            for (const auto& row : in.rows) {
                Volume v = load_volume(row.path);
                const std::string file = row.subject_id + (row.modality.empty() ? "" : "_" + row.modality) + ".rvol";
                write_rvol(v, (fs::path(prep_out) / file).string());
                ManifestRow r = row;
                r.path = file;
                out.rows.push_back(r);
                std::cerr << row.subject_id << ": " << v.extents[0] << "x" << v.extents[1] << "x" << v.extents[2]
                          << "\n";
            }
            write_text((fs::path(prep_out) / "manifest.csv").string(), format_manifest(out));
        } else if (*split) {
            const Manifest m = read_manifest(split_manifest);
            const FoldPlan plan = make_folds(subjects_of(m.for_modality(split_modality)), split_seed, split_k);
            write_text(split_out, plan.to_json());
        } else if (*train_cmd) {
            const RunConfig cfg = train_flags.resolve();
            const auto subjects = load_run_subjects(train_manifest, cfg, cfg.slice_lo, cfg.slice_hi);
            const FoldPlan plan = plan_for(subjects, cfg, train_plan);
            FoldModel fm = train_fold(subjects, plan, train_fold_index, cfg, train_flags.progress());
            const TrainingState state{cfg.train.epochs};
            save_checkpoint(fm.model, train_out, &state);
            if (!train_log.empty()) {
                nlohmann::ordered_json j;
                j["fold"] = train_fold_index;
                j["best_epoch"] = fm.result.best_epoch;
                j["steps"] = fm.result.steps;
                nlohmann::ordered_json log = nlohmann::ordered_json::array();
                for (const auto& e : fm.result.log) {
                    log.push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss},
                                   {"train_acc", e.train_acc}, {"val_acc", e.val_acc}});
                }
                j["log"] = log;
                write_text(train_log, j.dump(2) + "\n");
            }
        } else if (*eval) {
            const RunConfig flags = eval_flags.resolve();
            auto loaded = load_checkpoint<float>(eval_ckpt);
            RunConfig cfg = flags;
            cfg.model = loaded.model.config();
            const auto subjects = load_run_subjects(eval_manifest, cfg, cfg.slice_lo, cfg.slice_hi);
            CvReport report;
            report.config = cfg;
            report.plan = plan_for(subjects, cfg, eval_plan);
            report.folds.push_back(evaluate_fold(loaded.model, subjects, report.plan, eval_fold));
            aggregate(report);
            write_text(eval_out, report.to_json());
            std::cerr << "fold " << eval_fold << ": " << metrics_line(report.aggregate) << "\n";
        } else if (*cv) {
            const RunConfig cfg = cv_flags.resolve();
            auto subjects = load_run_subjects(cv_manifest, cfg, cfg.slice_lo, cfg.slice_hi);
            if (cv_shuffle) shuffle_labels(subjects, cfg.fold_seed);
            const FoldPlan plan = plan_for(subjects, cfg, cv_plan);
            const CvReport report = run_cv(subjects, cfg, &plan, cv_flags.progress());
            write_text((fs::path(cv_out) / "report.json").string(), report.to_json());
            write_text((fs::path(cv_out) / "metrics.csv").string(), report.to_csv());
            std::cout << (cfg.vote ? "subject" : "slice") << " level: " << metrics_line(report.aggregate) << "\n";
        } else if (*sweep) {
            const RunConfig cfg = sweep_flags.resolve();
            std::vector<std::pair<int, int>> spans;
            for (const auto& s : sweep_spans) spans.push_back(parse_span(s));
            const SpanLoader loader = [&](int lo, int hi) { return load_run_subjects(sweep_manifest, cfg, lo, hi); };
            const auto rows = sweep_slices(loader, spans, cfg, sweep_flags.progress());
            write_text((fs::path(sweep_out) / "sweep.json").string(), sweep_to_json(rows));
            write_text((fs::path(sweep_out) / "sweep.csv").string(), sweep_to_csv(rows));
            for (const auto& r : rows) {
                std::cout << r.lo << ":" << r.hi << "  " << metrics_line(r.report.aggregate) << "\n";
            }
        } else if (*predict) {
            const auto [lo, hi] = parse_span(pred_slices);
            auto loaded = load_checkpoint<float>(pred_ckpt);
            const ModelConfig& mc = loaded.model.config();
            const Volume v = load_volume(pred_volume);
            SubjectSlices s{fs::path(pred_volume).filename().string(), "", kControl, {}, {}};
            for (auto& sl : select_slices(v, lo, hi, SliceOptions{mc.image_height, mc.image_width, !pred_no_normalize})
                                .slices) {
                s.indices.push_back(sl.index);
                s.images.push_back(std::move(sl.image));
            }
            const auto outcome = predict_subjects(loaded.model, {&s}).front();
            nlohmann::ordered_json j;
            j["volume"] = pred_volume;
            j["predicted"] = label_name(outcome.predicted);
            j["patient_votes"] = outcome.patient_votes;
            j["control_votes"] = outcome.control_votes;
            j["tie_rule"] = outcome.tie_rule;
            nlohmann::ordered_json slices = nlohmann::ordered_json::array();
            for (const auto& sl : outcome.slices) {
                slices.push_back({{"index", sl.index}, {"label", label_name(sl.label)}, {"p_patient", sl.p_patient}});
            }
            j["slices"] = slices;
            write_text(pred_out, j.dump(2) + "\n");
        }
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kNumerical;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kData;
    } catch (const DimensionError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    }
    return kOk;
}
