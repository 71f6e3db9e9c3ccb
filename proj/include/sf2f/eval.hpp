#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sf2f/dataset.hpp"
#include "sf2f/image.hpp"
#include "sf2f/model.hpp"
#include "sf2f/trainer.hpp"
#include "sf2f/volume.hpp"

namespace sf2f {

struct VoteResult {
    int label = kControl;
    std::size_t patient_votes = 0;
    std::size_t control_votes = 0;
    double mean_p_patient = 0.0;
    double mean_p_control = 0.0;
    bool tie_rule = false;
};

/// Strict majority of slice classes. An exact tie goes to the class with the
/// larger mean probability, and a remaining tie goes to patient.
VoteResult majority_vote(const std::vector<SlicePrediction>& slices);

/// Number of times the tie rule has fired in this process.
std::size_t tie_rule_invocations();
void reset_tie_rule_invocations();

/// Counts with patient as the positive class.
struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t tn = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    std::size_t total() const noexcept { return tp + tn + fp + fn; }
    ConfusionMatrix& operator+=(const ConfusionMatrix& o);
    bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(const std::vector<int>& predicted, const std::vector<int>& truth);

/// A ratio whose denominator is zero reports 0 and sets its flag.
struct Metrics {
    double acc = 0.0;
    double sen = 0.0;
    double spe = 0.0;
    double pre = 0.0;
    double f1 = 0.0;
    bool sen_degenerate = false;
    bool spe_degenerate = false;
    bool pre_degenerate = false;
    bool f1_degenerate = false;
};

Metrics metrics(const ConfusionMatrix& cm);

/// Unweighted mean of each metric; a flag is set if any input has it set.
Metrics mean_metrics(const std::vector<Metrics>& list);

struct SubjectSlices {
    std::string id;
    std::string center;
    int label = kControl;
    std::vector<int> indices;
    std::vector<Image> images;
};

std::vector<SubjectSlices> subjects_from_stacks(const std::vector<SliceStack>& stacks, int lo, int hi, bool normalize);

/// Loads every row's volume and selects the span.
std::vector<SubjectSlices> load_subjects(const std::vector<ManifestRow>& rows, int lo, int hi, const SliceOptions& opt);

/// Randomly permutes labels across subjects (label-shuffled control).
void shuffle_labels(std::vector<SubjectSlices>& subjects, std::uint64_t seed);

std::vector<SubjectInfo> subject_infos(const std::vector<SubjectSlices>& subjects);

struct RunConfig {
    ModelConfig model = ModelConfig::toy();
    TrainConfig train;
    std::uint64_t fold_seed = 0;
    std::size_t k = 5;
    double val_fraction = 0.1;
    int slice_lo = 111;
    int slice_hi = 125;
    bool vote = true;
    std::string modality;

    /// Full-scale model with the published training schedule.
    static RunConfig full_scale();
    /// Toy model, 30 epochs, and a larger learning rate because this model
    /// trains from scratch on small slices.
    static RunConfig toy();

    KeyValues to_key_values() const;
    /// Reads "model.*", "train.*" and "run.*" keys.
    void apply(const KeyValues& kv);
};

struct SliceOutcome {
    int index = 0;
    int label = kControl;
    double p_patient = 0.0;
};

struct SubjectOutcome {
    std::string id;
    std::string center;
    int truth = kControl;
    int predicted = kControl;
    std::size_t patient_votes = 0;
    std::size_t control_votes = 0;
    bool tie_rule = false;
    std::vector<SliceOutcome> slices;
};

struct FoldReport {
    std::size_t fold = 0;
    ConfusionMatrix subject_cm;
    Metrics subject_metrics;
    ConfusionMatrix slice_cm;
    Metrics slice_metrics;
    int best_epoch = -1;
    std::vector<EpochLog> log;
    std::vector<SubjectOutcome> subjects;
    std::vector<std::string> warnings;

    /// Subject-level metrics when voting, slice-level otherwise.
    const Metrics& scored(bool vote) const { return vote ? subject_metrics : slice_metrics; }
};

/// Predicts every slice of every subject and votes.
template <typename T>
std::vector<SubjectOutcome> predict_subjects(const Sf2Former<T>& model, const std::vector<const SubjectSlices*>& subjects);

/// Fills confusion matrices, metrics and warnings from subject outcomes.
void score_fold(FoldReport& report);

struct CvReport {
    RunConfig config;
    FoldPlan plan;
    std::vector<FoldReport> folds;
    Metrics aggregate;          // mean of the scored metric across folds
    Metrics aggregate_subject;  // mean of voted subject-level metrics
    Metrics aggregate_slice;    // mean of slice-level metrics

    std::string to_json() const;
    std::string to_csv() const;
};

using FoldCallback = std::function<void(std::size_t fold, const EpochLog&)>;

struct FoldModel {
    Sf2Former<float> model;
    TrainResult result;
};

/// Trains one fold of a plan (subject ids resolved against `subjects`).
FoldModel train_fold(const std::vector<SubjectSlices>& subjects, const FoldPlan& plan, std::size_t fold,
                     const RunConfig& cfg, const FoldCallback& on_epoch = {});

/// Evaluates a trained model on a fold's test subjects.
FoldReport evaluate_fold(const Sf2Former<float>& model, const std::vector<SubjectSlices>& subjects,
                         const FoldPlan& plan, std::size_t fold);

/// Full k-fold run. Uses `plan` when given, otherwise builds one from the
/// subjects with `cfg.fold_seed`.
CvReport run_cv(const std::vector<SubjectSlices>& subjects, const RunConfig& cfg, const FoldPlan* plan = nullptr,
                const FoldCallback& on_epoch = {});

/// Recomputes aggregates from the per-fold reports.
void aggregate(CvReport& report);

struct SweepRow {
    int lo = 0;
    int hi = 0;
    CvReport report;
};

using SpanLoader = std::function<std::vector<SubjectSlices>(int lo, int hi)>;

/// One cross-validation run per span, all sharing the same fold plan.
std::vector<SweepRow> sweep_slices(const SpanLoader& load, const std::vector<std::pair<int, int>>& spans,
                                   const RunConfig& cfg, const FoldCallback& on_epoch = {});

std::string sweep_to_json(const std::vector<SweepRow>& rows);
std::string sweep_to_csv(const std::vector<SweepRow>& rows);

}  // namespace sf2f
