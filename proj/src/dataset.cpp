#include "sf2f/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sf2f/error.hpp"
#include "sf2f/model.hpp"
#include "sf2f/nn.hpp"

namespace sf2f {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cell);
            cell.clear();
        } else if (ch != '\r') {
            cell += ch;
        }
    }
    cells.push_back(cell);
    for (auto& c : cells) {
        const auto a = c.find_first_not_of(" \t");
        const auto b = c.find_last_not_of(" \t");
        c = a == std::string::npos ? std::string() : c.substr(a, b - a + 1);
    }
    return cells;
}

}  // namespace

std::string label_name(int label) {
    if (label == kPatient) return "patient";
    if (label == kControl) return "control";
    throw DataError("invalid label value " + std::to_string(label));
}

int parse_label(const std::string& s) {
    if (s == "patient") return kPatient;
    if (s == "control") return kControl;
    throw DataError("label must be 'patient' or 'control', got '" + s + "'");
}

std::vector<ManifestRow> Manifest::for_modality(const std::string& modality) const {
    std::vector<ManifestRow> out;
    for (const auto& r : rows) {
        if (modality.empty() || r.modality == modality) out.push_back(r);
    }
    return out;
}

Manifest parse_manifest(const std::string& text, const std::string& base_dir) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    Manifest m;
    std::set<std::pair<std::string, std::string>> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split_csv_line(line);
        const std::string where = "manifest line " + std::to_string(line_no) + ": ";
        if (!header_seen) {
            const std::vector<std::string> expected{"subject_id", "label", "center", "modality", "path"};
            if (cells != expected) throw DataError(where + "expected header subject_id,label,center,modality,path");
            header_seen = true;
            continue;
        }
        if (cells.size() != 5) {
            throw DataError(where + "expected 5 columns, got " + std::to_string(cells.size()));
        }
        ManifestRow row;
        row.subject_id = cells[0];
        if (row.subject_id.empty()) throw DataError(where + "empty subject_id");
        try {
            row.label = parse_label(cells[1]);
        } catch (const DataError& e) {
            throw DataError(where + e.what());
        }
        row.center = cells[2];
        if (row.center.empty()) throw DataError(where + "empty center");
        row.modality = cells[3];
        row.path = cells[4];
        if (row.path.empty()) throw DataError(where + "empty path");
        if (!base_dir.empty() && std::filesystem::path(row.path).is_relative()) {
            row.path = (std::filesystem::path(base_dir) / row.path).string();
        }
        if (!seen.emplace(row.subject_id, row.modality).second) {
            throw DataError(where + "duplicate subject '" + row.subject_id + "' for modality '" + row.modality + "'");
        }
        m.rows.push_back(std::move(row));
    }
    if (!header_seen) throw DataError("manifest is empty");
    return m;
}

Manifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_manifest(ss.str(), std::filesystem::path(path).parent_path().string());
}

std::string format_manifest(const Manifest& m) {
    std::string out = "subject_id,label,center,modality,path\n";
    for (const auto& r : m.rows) {
        out += r.subject_id + "," + label_name(r.label) + "," + r.center + "," + r.modality + "," + r.path + "\n";
    }
    return out;
}

std::vector<SubjectInfo> subjects_of(const std::vector<ManifestRow>& rows) {
    std::vector<SubjectInfo> out;
    std::set<std::string> seen;
    for (const auto& r : rows) {
        if (seen.insert(r.subject_id).second) out.push_back({r.subject_id, r.center, r.label});
    }
    return out;
}

std::string FoldPlan::to_json() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["k"] = k;
    j["folds"] = nlohmann::ordered_json::array();
    for (const auto& f : folds) {
        nlohmann::ordered_json jf;
        jf["train"] = f.train;
        jf["val"] = f.val;
        jf["test"] = f.test;
        j["folds"].push_back(std::move(jf));
    }
    return j.dump(2) + "\n";
}

FoldPlan FoldPlan::from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        FoldPlan p;
        p.seed = j.at("seed").get<std::uint64_t>();
        p.k = j.at("k").get<std::size_t>();
        for (const auto& jf : j.at("folds")) {
            Fold f;
            f.train = jf.at("train").get<std::vector<std::string>>();
            f.val = jf.at("val").get<std::vector<std::string>>();
            f.test = jf.at("test").get<std::vector<std::string>>();
            p.folds.push_back(std::move(f));
        }
        if (p.folds.size() != p.k) throw DataError("fold count does not match k");
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("fold plan", e.what());
    }
}

FoldPlan make_folds(const std::vector<SubjectInfo>& subjects, std::uint64_t seed, std::size_t k, double val_fraction) {
    if (k < 2) throw DataError("need at least 2 folds");
    if (subjects.size() < k) {
        throw DataError("cannot build " + std::to_string(k) + " folds from " + std::to_string(subjects.size()) +
                        " subjects");
    }
    std::set<std::string> ids;
    for (const auto& s : subjects) {
        if (!ids.insert(s.id).second) throw DataError("duplicate subject id '" + s.id + "'");
    }

    std::map<std::pair<std::string, int>, std::vector<std::string>> strata;
    for (const auto& s : subjects) strata[{s.center, s.label}].push_back(s.id);

    std::vector<std::string> order;
    std::uint64_t stratum_index = 0;
    for (auto& [key, members] : strata) {
        std::sort(members.begin(), members.end());
        Rng rng(derive_seed(seed, 0x5354524154ULL, stratum_index++));
        std::shuffle(members.begin(), members.end(), rng);
        order.insert(order.end(), members.begin(), members.end());
    }

    const std::size_t n = order.size();
    const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(val_fraction * n)));
    FoldPlan plan;
    plan.seed = seed;
    plan.k = k;
    plan.folds.resize(k);
    for (std::size_t f = 0; f < k; ++f) {
        std::vector<std::string> pool;
        for (std::size_t i = 0; i < n; ++i) {
            if (i % k == f) {
                plan.folds[f].test.push_back(order[i]);
            } else {
                pool.push_back(order[i]);
            }
        }
        if (n_val >= pool.size()) throw DataError("too few subjects for a non-empty training set");
        std::vector<bool> is_val(pool.size(), false);
        for (std::size_t j = 0; j < n_val; ++j) {
            is_val[(2 * j + 1) * pool.size() / (2 * n_val)] = true;
        }
        for (std::size_t i = 0; i < pool.size(); ++i) {
            (is_val[i] ? plan.folds[f].val : plan.folds[f].train).push_back(pool[i]);
        }
    }
    return plan;
}

void check_fold_plan(const FoldPlan& plan, const std::vector<SubjectInfo>& subjects) {
    std::map<std::string, int> test_count;
    for (const auto& s : subjects) test_count[s.id] = 0;
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        const Fold& fold = plan.folds[f];
        std::set<std::string> seen;
        for (const auto* part : {&fold.train, &fold.val, &fold.test}) {
            for (const auto& id : *part) {
                if (!test_count.count(id)) throw DataError("fold " + std::to_string(f) + ": unknown subject '" + id + "'");
                if (!seen.insert(id).second) {
                    throw DataError("fold " + std::to_string(f) + ": subject '" + id + "' appears in more than one split");
                }
            }
        }
        if (seen.size() != subjects.size()) {
            throw DataError("fold " + std::to_string(f) + " covers " + std::to_string(seen.size()) + " of " +
                            std::to_string(subjects.size()) + " subjects");
        }
        for (const auto& id : fold.test) ++test_count[id];
    }
    for (const auto& [id, count] : test_count) {
        if (count != 1) {
            throw DataError("subject '" + id + "' is in " + std::to_string(count) + " test folds");
        }
    }
}

}  // namespace sf2f
