#include "sf2f/eval.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sf2f/checkpoint.hpp"
#include "sf2f/error.hpp"

namespace sf2f {

namespace {

std::atomic<std::size_t> g_tie_rule_count{0};

double ratio(std::size_t num, std::size_t den, bool& degenerate) {
    if (den == 0) {
        degenerate = true;
        return 0.0;
    }
    degenerate = false;
    return static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::ordered_json metrics_json(const Metrics& m) {
    nlohmann::ordered_json j;
    j["acc"] = m.acc;
    j["sen"] = m.sen;
    j["spe"] = m.spe;
    j["pre"] = m.pre;
    j["f1"] = m.f1;
    nlohmann::ordered_json flags = nlohmann::ordered_json::array();
    if (m.sen_degenerate) flags.push_back("sen");
    if (m.spe_degenerate) flags.push_back("spe");
    if (m.pre_degenerate) flags.push_back("pre");
    if (m.f1_degenerate) flags.push_back("f1");
    j["degenerate"] = flags;
    return j;
}

nlohmann::ordered_json confusion_json(const ConfusionMatrix& cm) {
    nlohmann::ordered_json j;
    j["tp"] = cm.tp;
    j["tn"] = cm.tn;
    j["fp"] = cm.fp;
    j["fn"] = cm.fn;
    return j;
}

nlohmann::ordered_json cv_json(const CvReport& r) {
    nlohmann::ordered_json j;
    nlohmann::ordered_json cfg;
    for (const auto& [k, v] : r.config.to_key_values()) cfg[k] = v;
    j["config"] = cfg;
    j["fold_seed"] = r.plan.seed;
    nlohmann::ordered_json folds = nlohmann::ordered_json::array();
    for (const auto& f : r.folds) {
        nlohmann::ordered_json jf;
        jf["fold"] = f.fold;
        jf["train"] = r.plan.folds[f.fold].train;
        jf["val"] = r.plan.folds[f.fold].val;
        jf["test"] = r.plan.folds[f.fold].test;
        jf["best_epoch"] = f.best_epoch;
        jf["metrics"] = metrics_json(f.scored(r.config.vote));
        jf["subject_confusion"] = confusion_json(f.subject_cm);
        jf["subject_metrics"] = metrics_json(f.subject_metrics);
        jf["slice_confusion"] = confusion_json(f.slice_cm);
        jf["slice_metrics"] = metrics_json(f.slice_metrics);
        jf["warnings"] = f.warnings;
        nlohmann::ordered_json log = nlohmann::ordered_json::array();
        for (const auto& e : f.log) {
            nlohmann::ordered_json je;
            je["epoch"] = e.epoch;
            je["lr"] = e.lr;
            je["train_loss"] = e.train_loss;
            je["train_acc"] = e.train_acc;
            if (std::isfinite(e.val_acc)) {
                je["val_acc"] = e.val_acc;
            } else {
                je["val_acc"] = nullptr;
            }
            log.push_back(std::move(je));
        }
        jf["log"] = log;
        nlohmann::ordered_json subjects = nlohmann::ordered_json::array();
        for (const auto& s : f.subjects) {
            nlohmann::ordered_json js;
            js["id"] = s.id;
            js["center"] = s.center;
            js["truth"] = label_name(s.truth);
            js["predicted"] = label_name(s.predicted);
            js["patient_votes"] = s.patient_votes;
            js["control_votes"] = s.control_votes;
            js["tie_rule"] = s.tie_rule;
            nlohmann::ordered_json slices = nlohmann::ordered_json::array();
            for (const auto& sl : s.slices) {
                slices.push_back({{"index", sl.index}, {"label", label_name(sl.label)}, {"p_patient", sl.p_patient}});
            }
            js["slices"] = slices;
            subjects.push_back(std::move(js));
        }
        jf["subjects"] = subjects;
        folds.push_back(std::move(jf));
    }
    j["folds"] = folds;
    j["aggregate"] = metrics_json(r.aggregate);
    j["aggregate_subject"] = metrics_json(r.aggregate_subject);
    j["aggregate_slice"] = metrics_json(r.aggregate_slice);
    return j;
}

std::string csv_number(double v) { return format_double(v); }

std::string metrics_csv(const Metrics& m) {
    return csv_number(m.acc) + "," + csv_number(m.sen) + "," + csv_number(m.spe) + "," + csv_number(m.pre) + "," +
           csv_number(m.f1);
}

const SubjectSlices& find_subject(const std::map<std::string, const SubjectSlices*>& index, const std::string& id) {
    auto it = index.find(id);
    if (it == index.end()) throw DataError("fold plan names unknown subject '" + id + "'");
    return *it->second;
}

std::map<std::string, const SubjectSlices*> index_subjects(const std::vector<SubjectSlices>& subjects) {
    std::map<std::string, const SubjectSlices*> index;
    for (const auto& s : subjects) {
        if (!index.emplace(s.id, &s).second) throw DataError("duplicate subject id '" + s.id + "'");
    }
    return index;
}

std::vector<LabeledSlice> flatten(const std::map<std::string, const SubjectSlices*>& index,
                                  const std::vector<std::string>& ids) {
    std::vector<LabeledSlice> out;
    for (const auto& id : ids) {
        const SubjectSlices& s = find_subject(index, id);
        for (const auto& img : s.images) out.push_back({img, s.label});
    }
    return out;
}

}  // namespace

VoteResult majority_vote(const std::vector<SlicePrediction>& slices) {
    if (slices.empty()) throw DataError("majority vote over an empty slice list");
    VoteResult r;
    for (const auto& s : slices) {
        (s.label == kPatient ? r.patient_votes : r.control_votes) += 1;
        r.mean_p_patient += s.probs[kPatient];
        r.mean_p_control += s.probs[kControl];
    }
    r.mean_p_patient /= static_cast<double>(slices.size());
    r.mean_p_control /= static_cast<double>(slices.size());
    if (r.patient_votes != r.control_votes) {
        r.label = r.patient_votes > r.control_votes ? kPatient : kControl;
        return r;
    }
    r.tie_rule = true;
    g_tie_rule_count.fetch_add(1, std::memory_order_relaxed);
    r.label = r.mean_p_control > r.mean_p_patient ? kControl : kPatient;
    return r;
}

std::size_t tie_rule_invocations() { return g_tie_rule_count.load(std::memory_order_relaxed); }
void reset_tie_rule_invocations() { g_tie_rule_count.store(0, std::memory_order_relaxed); }

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
}

ConfusionMatrix confusion(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size()) {
        throw DimensionError("confusion: " + std::to_string(predicted.size()) + " predictions vs " +
                             std::to_string(truth.size()) + " labels");
    }
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const bool p = predicted[i] == kPatient;
        const bool t = truth[i] == kPatient;
        if (p && t) ++cm.tp;
        else if (!p && !t) ++cm.tn;
        else if (p) ++cm.fp;
        else ++cm.fn;
    }
    return cm;
}

Metrics metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw DataError("metrics of an empty confusion matrix");
    Metrics m;
    bool unused = false;
    m.acc = ratio(cm.tp + cm.tn, cm.total(), unused);
    m.sen = ratio(cm.tp, cm.tp + cm.fn, m.sen_degenerate);
    m.spe = ratio(cm.tn, cm.tn + cm.fp, m.spe_degenerate);
    m.pre = ratio(cm.tp, cm.tp + cm.fp, m.pre_degenerate);
    if (m.pre + m.sen > 0.0) {
        m.f1 = 2.0 * m.pre * m.sen / (m.pre + m.sen);
    } else {
        m.f1 = 0.0;
        m.f1_degenerate = true;
    }
    return m;
}

Metrics mean_metrics(const std::vector<Metrics>& list) {
    Metrics m;
    if (list.empty()) return m;
    for (const auto& x : list) {
        m.acc += x.acc;
        m.sen += x.sen;
        m.spe += x.spe;
        m.pre += x.pre;
        m.f1 += x.f1;
        m.sen_degenerate = m.sen_degenerate || x.sen_degenerate;
        m.spe_degenerate = m.spe_degenerate || x.spe_degenerate;
        m.pre_degenerate = m.pre_degenerate || x.pre_degenerate;
        m.f1_degenerate = m.f1_degenerate || x.f1_degenerate;
    }
    const auto n = static_cast<double>(list.size());
    m.acc /= n;
    m.sen /= n;
    m.spe /= n;
    m.pre /= n;
    m.f1 /= n;
    return m;
}

std::vector<SubjectSlices> subjects_from_stacks(const std::vector<SliceStack>& stacks, int lo, int hi, bool normalize) {
    std::vector<SubjectSlices> out;
    out.reserve(stacks.size());
    for (const auto& st : stacks) {
        SliceSet set = st.select(lo, hi, normalize);
        SubjectSlices s{st.subject_id, st.center, st.label, {}, {}};
        for (auto& sl : set.slices) {
            s.indices.push_back(sl.index);
            s.images.push_back(std::move(sl.image));
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<SubjectSlices> load_subjects(const std::vector<ManifestRow>& rows, int lo, int hi, const SliceOptions& opt) {
    std::vector<SubjectSlices> out;
    for (const auto& row : rows) {
        Volume v = load_volume(row.path);
        v.subject_id = row.subject_id;
        v.center = row.center;
        v.label = row.label;
        v.modality = row.modality;
        SliceSet set = select_slices(v, lo, hi, opt);
        SubjectSlices s{row.subject_id, row.center, row.label, {}, {}};
        for (auto& sl : set.slices) {
            s.indices.push_back(sl.index);
            s.images.push_back(std::move(sl.image));
        }
        out.push_back(std::move(s));
    }
    return out;
}

void shuffle_labels(std::vector<SubjectSlices>& subjects, std::uint64_t seed) {
    std::vector<int> labels;
    for (const auto& s : subjects) labels.push_back(s.label);
    Rng rng(derive_seed(seed, 0x4c41424cULL));
    std::shuffle(labels.begin(), labels.end(), rng);
    for (std::size_t i = 0; i < subjects.size(); ++i) subjects[i].label = labels[i];
}

std::vector<SubjectInfo> subject_infos(const std::vector<SubjectSlices>& subjects) {
    std::vector<SubjectInfo> out;
    for (const auto& s : subjects) out.push_back({s.id, s.center, s.label});
    return out;
}

RunConfig RunConfig::full_scale() {
    RunConfig c;
    c.model = ModelConfig::full_scale();
    return c;
}

RunConfig RunConfig::toy() {
    RunConfig c;
    c.model = ModelConfig::toy();
    c.train.epochs = 30;
    c.train.lr_max = 0.05;
    return c;
}

KeyValues RunConfig::to_key_values() const {
    KeyValues kv = model.to_key_values();
    for (const auto& [k, v] : train.to_key_values()) kv[k] = v;
    kv["run.fold_seed"] = std::to_string(fold_seed);
    kv["run.k"] = std::to_string(k);
    kv["run.val_fraction"] = format_double(val_fraction);
    kv["run.slices"] = std::to_string(slice_lo) + ":" + std::to_string(slice_hi);
    kv["run.vote"] = vote ? "1" : "0";
    if (!modality.empty()) kv["run.modality"] = modality;
    return kv;
}

void RunConfig::apply(const KeyValues& kv) {
    KeyValues merged = model.to_key_values();
    for (const auto& [k, v] : kv) {
        if (k.rfind("model.", 0) == 0) merged[k] = v;
    }
    model = ModelConfig::from_key_values(merged);
    model.validate();
    train.apply(kv);
    fold_seed = static_cast<std::uint64_t>(kv_int(kv, "run.fold_seed", static_cast<long long>(fold_seed)));
    k = static_cast<std::size_t>(kv_int(kv, "run.k", static_cast<long long>(k)));
    val_fraction = kv_double(kv, "run.val_fraction", val_fraction);
    vote = kv_bool(kv, "run.vote", vote);
    modality = kv_string(kv, "run.modality", modality);
    const std::string span = kv_string(kv, "run.slices", "");
    if (!span.empty()) {
        const auto colon = span.find(':');
        if (colon == std::string::npos) throw Error("run.slices must be lo:hi");
        KeyValues tmp{{"lo", span.substr(0, colon)}, {"hi", span.substr(colon + 1)}};
        slice_lo = static_cast<int>(kv_int(tmp, "lo", slice_lo));
        slice_hi = static_cast<int>(kv_int(tmp, "hi", slice_hi));
    }
    for (const auto& [key, value] : kv) {
        const bool known_prefix =
            key.rfind("model.", 0) == 0 || key.rfind("train.", 0) == 0 || key.rfind("run.", 0) == 0;
        if (!known_prefix) throw Error("unknown config key '" + key + "'");
    }
}

template <typename T>
std::vector<SubjectOutcome> predict_subjects(const Sf2Former<T>& model, const std::vector<const SubjectSlices*>& subjects) {
    std::vector<SubjectOutcome> out;
    out.reserve(subjects.size());
    for (const SubjectSlices* s : subjects) {
        SubjectOutcome o;
        o.id = s->id;
        o.center = s->center;
        o.truth = s->label;
        std::vector<SlicePrediction> preds;
        for (std::size_t i = 0; i < s->images.size(); ++i) {
            const Tensor<float> input = to_model_input(s->images[i], model.config().channels);
            SlicePrediction p = predict_slice(model, input.template cast<T>());
            o.slices.push_back({s->indices[i], p.label, p.p_patient()});
            preds.push_back(p);
        }
        const VoteResult v = majority_vote(preds);
        o.predicted = v.label;
        o.patient_votes = v.patient_votes;
        o.control_votes = v.control_votes;
        o.tie_rule = v.tie_rule;
        out.push_back(std::move(o));
    }
    return out;
}

template std::vector<SubjectOutcome> predict_subjects<float>(const Sf2Former<float>&,
                                                             const std::vector<const SubjectSlices*>&);
template std::vector<SubjectOutcome> predict_subjects<double>(const Sf2Former<double>&,
                                                              const std::vector<const SubjectSlices*>&);

void score_fold(FoldReport& report) {
    std::vector<int> subj_pred, subj_truth, slice_pred, slice_truth;
    for (const auto& s : report.subjects) {
        subj_pred.push_back(s.predicted);
        subj_truth.push_back(s.truth);
        for (const auto& sl : s.slices) {
            slice_pred.push_back(sl.label);
            slice_truth.push_back(s.truth);
        }
    }
    report.subject_cm = confusion(subj_pred, subj_truth);
    report.slice_cm = confusion(slice_pred, slice_truth);
    report.subject_metrics = metrics(report.subject_cm);
    report.slice_metrics = metrics(report.slice_cm);
    report.warnings.clear();
    const auto positives = report.subject_cm.tp + report.subject_cm.fn;
    const auto negatives = report.subject_cm.tn + report.subject_cm.fp;
    if (positives == 0) report.warnings.push_back("fold " + std::to_string(report.fold) + ": no patients in test set");
    if (negatives == 0) report.warnings.push_back("fold " + std::to_string(report.fold) + ": no controls in test set");
}

FoldModel train_fold(const std::vector<SubjectSlices>& subjects, const FoldPlan& plan, std::size_t fold,
                     const RunConfig& cfg, const FoldCallback& on_epoch) {
    if (fold >= plan.folds.size()) throw DataError("fold index " + std::to_string(fold) + " out of range");
    const auto index = index_subjects(subjects);
    const Fold& f = plan.folds[fold];
    const std::vector<LabeledSlice> train_slices = flatten(index, f.train);
    const std::vector<LabeledSlice> val_slices = flatten(index, f.val);

    AugmentOptions aug = cfg.train.augmentation;
    aug.clamp_to_input_range = !cfg.train.normalize;
    const SampleSource train_src = slice_source(train_slices, cfg.model.channels, aug);
    const SampleSource val_src = slice_source(val_slices, cfg.model.channels, aug);

    FoldModel fm{Sf2Former<float>(cfg.model, derive_seed(cfg.train.seed, 0x494e4954ULL, fold)), {}};
    if (!cfg.train.init_checkpoint.empty()) load_checkpoint_into(fm.model, cfg.train.init_checkpoint);
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.train.seed, 0x464f4c44ULL, fold);
    EpochCallback cb;
    if (on_epoch) cb = [&on_epoch, fold](const EpochLog& e) { on_epoch(fold, e); };
    fm.result = train(fm.model, train_src, &val_src, tc, cb);
    return fm;
}

FoldReport evaluate_fold(const Sf2Former<float>& model, const std::vector<SubjectSlices>& subjects,
                         const FoldPlan& plan, std::size_t fold) {
    if (fold >= plan.folds.size()) throw DataError("fold index " + std::to_string(fold) + " out of range");
    const auto index = index_subjects(subjects);
    std::vector<const SubjectSlices*> test;
    for (const auto& id : plan.folds[fold].test) test.push_back(&find_subject(index, id));
    FoldReport report;
    report.fold = fold;
    report.subjects = predict_subjects(model, test);
    score_fold(report);
    return report;
}

void aggregate(CvReport& report) {
    std::vector<Metrics> scored, subj, slice;
    for (const auto& f : report.folds) {
        scored.push_back(f.scored(report.config.vote));
        subj.push_back(f.subject_metrics);
        slice.push_back(f.slice_metrics);
    }
    report.aggregate = mean_metrics(scored);
    report.aggregate_subject = mean_metrics(subj);
    report.aggregate_slice = mean_metrics(slice);
}

CvReport run_cv(const std::vector<SubjectSlices>& subjects, const RunConfig& cfg, const FoldPlan* plan,
                const FoldCallback& on_epoch) {
    CvReport report;
    report.config = cfg;
    const auto infos = subject_infos(subjects);
    report.plan = plan ? *plan : make_folds(infos, cfg.fold_seed, cfg.k, cfg.val_fraction);
    check_fold_plan(report.plan, infos);
    for (std::size_t f = 0; f < report.plan.folds.size(); ++f) {
        FoldModel fm = train_fold(subjects, report.plan, f, cfg, on_epoch);
        FoldReport fr = evaluate_fold(fm.model, subjects, report.plan, f);
        fr.best_epoch = fm.result.best_epoch;
        fr.log = std::move(fm.result.log);
        report.folds.push_back(std::move(fr));
    }
    aggregate(report);
    return report;
}

std::string CvReport::to_json() const { return cv_json(*this).dump(2) + "\n"; }

std::string CvReport::to_csv() const {
    std::string out = "fold,level,acc,sen,spe,pre,f1\n";
    const std::string level = config.vote ? "subject" : "slice";
    for (const auto& f : folds) out += std::to_string(f.fold) + "," + level + "," + metrics_csv(f.scored(config.vote)) + "\n";
    out += "mean," + level + "," + metrics_csv(aggregate) + "\n";
    return out;
}

std::vector<SweepRow> sweep_slices(const SpanLoader& load, const std::vector<std::pair<int, int>>& spans,
                                   const RunConfig& cfg, const FoldCallback& on_epoch) {
    if (spans.empty()) throw Error("sweep needs at least one span");
    std::vector<SweepRow> rows;
    FoldPlan plan;
    for (std::size_t i = 0; i < spans.size(); ++i) {
        const auto [lo, hi] = spans[i];
        const std::vector<SubjectSlices> subjects = load(lo, hi);
        if (i == 0) plan = make_folds(subject_infos(subjects), cfg.fold_seed, cfg.k, cfg.val_fraction);
        RunConfig rc = cfg;
        rc.slice_lo = lo;
        rc.slice_hi = hi;
        rows.push_back({lo, hi, run_cv(subjects, rc, &plan, on_epoch)});
    }
    return rows;
}

std::string sweep_to_json(const std::vector<SweepRow>& rows) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json jr;
        jr["slices"] = std::to_string(r.lo) + ":" + std::to_string(r.hi);
        jr["aggregate"] = metrics_json(r.report.aggregate);
        jr["aggregate_subject"] = metrics_json(r.report.aggregate_subject);
        jr["aggregate_slice"] = metrics_json(r.report.aggregate_slice);
        jr["report"] = cv_json(r.report);
        j.push_back(std::move(jr));
    }
    return j.dump(2) + "\n";
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    std::string out = "slices,level,acc,sen,spe,pre,f1\n";
    for (const auto& r : rows) {
        out += std::to_string(r.lo) + ":" + std::to_string(r.hi) + "," + (r.report.config.vote ? "subject" : "slice") +
               "," + metrics_csv(r.report.aggregate) + "\n";
    }
    return out;
}

}  // namespace sf2f
