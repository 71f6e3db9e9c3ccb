#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sf2f {

struct ManifestRow {
    std::string subject_id;
    int label = -1;  // kPatient or kControl
    std::string center;
    std::string modality;
    std::string path;
};

struct Manifest {
    std::vector<ManifestRow> rows;

    /// Rows of one modality, in file order. Empty `modality` keeps every row.
    std::vector<ManifestRow> for_modality(const std::string& modality) const;
};

std::string label_name(int label);
/// "patient" or "control".
int parse_label(const std::string& s);

/// CSV with header `subject_id,label,center,modality,path`. Relative paths
/// are resolved against `base_dir` when it is non-empty.
Manifest parse_manifest(const std::string& text, const std::string& base_dir = "");
Manifest read_manifest(const std::string& path);
std::string format_manifest(const Manifest& m);

struct SubjectInfo {
    std::string id;
    std::string center;
    int label = -1;
};

std::vector<SubjectInfo> subjects_of(const std::vector<ManifestRow>& rows);

struct Fold {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
};

struct FoldPlan {
    std::uint64_t seed = 0;
    std::size_t k = 5;
    std::vector<Fold> folds;

    std::string to_json() const;
    static FoldPlan from_json(const std::string& text);
};

/// Subject-level k-fold plan stratified jointly by (center, label). Subjects
/// are shuffled within each stratum, strata are concatenated in sorted order
/// and dealt to test folds round-robin, so every stratum and every center is
/// spread over the folds within one subject of its proportional share. The
/// validation set holds round(val_fraction * n) subjects (at least one) taken
/// at even spacing from the remaining pool; the rest is training data.
FoldPlan make_folds(const std::vector<SubjectInfo>& subjects, std::uint64_t seed, std::size_t k = 5,
                    double val_fraction = 0.1);

/// Throws DataError if any subject is missing from the plan, appears in two
/// test folds, or is shared between the train/val/test sets of one fold.
void check_fold_plan(const FoldPlan& plan, const std::vector<SubjectInfo>& subjects);

}  // namespace sf2f
