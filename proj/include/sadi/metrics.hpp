#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace sadi {

// ---------------------------------------------------------------------------
// Vocabulary and caption parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> alnum_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        const unsigned char u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

inline std::string join_tokens(const std::vector<std::string>& tokens, std::size_t first,
                               std::size_t count) {
    std::string out;
    for (std::size_t i = 0; i < count; ++i) {
        if (i) out.push_back(' ');
        out += tokens[first + i];
    }
    return out;
}

inline std::string lowercase(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace detail

/// Surface-form -> canonical-label table. Keys are stored as normalized token
/// phrases ("hot dog"); canonical labels always map to themselves.
class synonym_table {
public:
    synonym_table() = default;

    static synonym_table from_map(const std::map<std::string, std::string>& entries) {
        synonym_table table;
        for (const auto& [surface, canonical] : entries) {
            table.add(surface, detail::lowercase(canonical));
        }
        // enforce the self-mapping invariant for every canonical label
        for (const auto& [surface, canonical] : entries) {
            const std::string canon = detail::lowercase(canonical);
            table.add(canon, canon);
        }
        return table;
    }

    bool empty() const { return phrases_.empty(); }
    int max_phrase_tokens() const { return max_tokens_; }

    const std::string* find(const std::string& phrase) const {
        auto it = phrases_.find(phrase);
        return it == phrases_.end() ? nullptr : &it->second;
    }

    /// Maps one label through the table; unknown labels pass through lowercased.
    std::string canonicalize(std::string_view label) const {
        const auto tokens = detail::alnum_tokens(label);
        const std::string key = detail::join_tokens(tokens, 0, tokens.size());
        if (const std::string* canon = find(key)) return *canon;
        return detail::lowercase(label);
    }

private:
    void add(const std::string& surface, const std::string& canonical) {
        const auto tokens = detail::alnum_tokens(surface);
        if (tokens.empty() || canonical.empty()) {
            throw std::invalid_argument("synonym table: empty surface form or label");
        }
        const std::string key = detail::join_tokens(tokens, 0, tokens.size());
        auto [it, inserted] = phrases_.emplace(key, canonical);
        if (!inserted && it->second != canonical) {
            throw std::invalid_argument("synonym table: '" + key + "' mapped to both '" +
                                        it->second + "' and '" + canonical + "'");
        }
        max_tokens_ = std::max(max_tokens_, static_cast<int>(tokens.size()));
    }

    std::unordered_map<std::string, std::string> phrases_;
    int max_tokens_ = 0;
};

/// Longest-first greedy extraction of canonical object labels from free text.
inline std::set<std::string> extract_objects(std::string_view caption,
                                             const synonym_table& vocabulary) {
    if (vocabulary.empty()) {
        throw std::invalid_argument("extract_objects: empty vocabulary");
    }
    const auto tokens = detail::alnum_tokens(caption);
    std::set<std::string> found;
    std::size_t i = 0;
    while (i < tokens.size()) {
        bool matched = false;
        std::size_t longest = std::min<std::size_t>(vocabulary.max_phrase_tokens(),
                                                    tokens.size() - i);
        for (std::size_t len = longest; len >= 1; --len) {
            const std::string phrase = detail::join_tokens(tokens, i, len);
            if (const std::string* canon = vocabulary.find(phrase)) {
                found.insert(*canon);
                i += len;
                matched = true;
                break;
            }
        }
        if (!matched) ++i;
    }
    return found;
}

// ---------------------------------------------------------------------------
// CHAIR
// ---------------------------------------------------------------------------

struct caption_record {
    std::string image_id;
    std::string caption;
};

struct annotation_record {
    std::string image_id;
    std::set<std::string> objects;  // canonical labels
};

struct chair_result {
    long n_captions = 0;
    long n_hal_captions = 0;
    long n_objects_mentioned = 0;
    long n_hal_objects = 0;
    double c_s = 0.0;
    double c_i = 0.0;
    // per-image set precision/recall against ground truth
    double precision = 0.0;  // macro
    double recall = 0.0;     // macro
    double f1 = 0.0;         // macro (the default F1)
    double precision_micro = 0.0;
    double recall_micro = 0.0;
    double f1_micro = 0.0;
};

namespace detail {

struct prf {
    double precision, recall, f1;
};

// Set-overlap precision/recall. Two empty sets count as a perfect match;
// exactly one empty set scores zero.
inline prf set_prf(std::size_t inter, std::size_t n_pred, std::size_t n_truth) {
    if (n_pred == 0 && n_truth == 0) return {1.0, 1.0, 1.0};
    const double p = n_pred > 0 ? static_cast<double>(inter) / n_pred : 0.0;
    const double r = n_truth > 0 ? static_cast<double>(inter) / n_truth : 0.0;
    const double f = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    return {p, r, f};
}

}  // namespace detail

/// CHAIR scoring over a caption corpus. A mention is hallucinated when its
/// canonical label is absent from the image's ground-truth set; mentions are
/// counted as the per-caption set. F1 compares the per-image mentioned set
/// against the ground truth (union over captions of the same image).
inline chair_result chair_scores(const std::vector<caption_record>& captions,
                                 const std::vector<annotation_record>& annotations,
                                 const synonym_table& vocabulary) {
    if (captions.empty()) throw std::invalid_argument("chair_scores: no captions");
    std::map<std::string, const std::set<std::string>*> truth;
    for (const auto& ann : annotations) truth[ann.image_id] = &ann.objects;

    chair_result result;
    std::map<std::string, std::set<std::string>> image_mentions;
    for (const auto& cap : captions) {
        auto it = truth.find(cap.image_id);
        if (it == truth.end()) {
            throw std::invalid_argument("chair_scores: no annotation for image_id '" +
                                        cap.image_id + "'");
        }
        const auto mentioned = extract_objects(cap.caption, vocabulary);
        long hallucinated = 0;
        for (const auto& obj : mentioned) {
            if (!it->second->count(obj)) ++hallucinated;
        }
        result.n_captions += 1;
        result.n_hal_captions += hallucinated > 0 ? 1 : 0;
        result.n_objects_mentioned += static_cast<long>(mentioned.size());
        result.n_hal_objects += hallucinated;
        image_mentions[cap.image_id].insert(mentioned.begin(), mentioned.end());
    }

    result.c_s = static_cast<double>(result.n_hal_captions) / result.n_captions;
    result.c_i = result.n_objects_mentioned > 0
                     ? static_cast<double>(result.n_hal_objects) / result.n_objects_mentioned
                     : 0.0;

    double macro_p = 0.0, macro_r = 0.0, macro_f = 0.0;
    std::size_t inter_total = 0, pred_total = 0, truth_total = 0;
    for (const auto& [image_id, mentioned] : image_mentions) {
        const auto& gt = *truth.at(image_id);
        std::size_t inter = 0;
        for (const auto& obj : mentioned) inter += gt.count(obj);
        const auto scores = detail::set_prf(inter, mentioned.size(), gt.size());
        macro_p += scores.precision;
        macro_r += scores.recall;
        macro_f += scores.f1;
        inter_total += inter;
        pred_total += mentioned.size();
        truth_total += gt.size();
    }
    const double n_images = static_cast<double>(image_mentions.size());
    result.precision = macro_p / n_images;
    result.recall = macro_r / n_images;
    result.f1 = macro_f / n_images;
    const auto micro = detail::set_prf(inter_total, pred_total, truth_total);
    result.precision_micro = micro.precision;
    result.recall_micro = micro.recall;
    result.f1_micro = micro.f1;
    return result;
}

// ---------------------------------------------------------------------------
// POPE
// ---------------------------------------------------------------------------

enum class pope_setting { random, popular, adversarial };

inline const char* to_string(pope_setting s) {
    switch (s) {
        case pope_setting::random: return "random";
        case pope_setting::popular: return "popular";
        case pope_setting::adversarial: return "adversarial";
    }
    return "?";
}

inline std::optional<pope_setting> pope_setting_from_string(const std::string& s) {
    if (s == "random") return pope_setting::random;
    if (s == "popular") return pope_setting::popular;
    if (s == "adversarial") return pope_setting::adversarial;
    return std::nullopt;
}

struct pope_record {
    std::string question_id;
    pope_setting setting = pope_setting::random;
    bool label_yes = false;
    std::string answer;
};

/// Free-form answers count as "yes" iff they start with "yes" after
/// lowercasing and trimming.
inline bool answer_is_yes(std::string_view answer) {
    std::size_t b = 0, e = answer.size();
    while (b < e && std::isspace(static_cast<unsigned char>(answer[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(answer[e - 1]))) --e;
    const std::string t = detail::lowercase(answer.substr(b, e - b));
    return t.rfind("yes", 0) == 0;
}

struct pope_setting_result {
    long tp = 0, fp = 0, fn = 0, tn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0, accuracy = 0.0;

    long total() const { return tp + fp + fn + tn; }
};

struct pope_result {
    std::map<pope_setting, pope_setting_result> per_setting;
    double average_f1 = 0.0;  // unweighted mean over the settings present
    std::vector<std::string> warnings;
};

/// Confusion-matrix scoring with "yes" as the positive class.
inline pope_result pope_f1(const std::vector<pope_record>& records) {
    if (records.empty()) throw std::invalid_argument("pope_f1: no records");
    pope_result result;
    for (const auto& rec : records) {
        auto& s = result.per_setting[rec.setting];
        const bool predicted_yes = answer_is_yes(rec.answer);
        if (rec.label_yes && predicted_yes) ++s.tp;
        else if (!rec.label_yes && predicted_yes) ++s.fp;
        else if (rec.label_yes && !predicted_yes) ++s.fn;
        else ++s.tn;
    }
    double f1_sum = 0.0;
    for (auto& [setting, s] : result.per_setting) {
        s.precision = (s.tp + s.fp) > 0 ? static_cast<double>(s.tp) / (s.tp + s.fp) : 0.0;
        s.recall = (s.tp + s.fn) > 0 ? static_cast<double>(s.tp) / (s.tp + s.fn) : 0.0;
        s.f1 = (s.precision + s.recall) > 0.0
                   ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                   : 0.0;
        s.accuracy = static_cast<double>(s.tp + s.tn) / s.total();
        f1_sum += s.f1;
    }
    for (pope_setting setting :
         {pope_setting::random, pope_setting::popular, pope_setting::adversarial}) {
        if (!result.per_setting.count(setting)) {
            result.warnings.push_back(std::string("setting '") + to_string(setting) +
                                      "' has no records; omitted from the average");
        }
    }
    result.average_f1 = f1_sum / static_cast<double>(result.per_setting.size());
    return result;
}

// ---------------------------------------------------------------------------
// File ingestion (JSON / JSON Lines) and result serialization
// ---------------------------------------------------------------------------

namespace detail {

inline std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    return in;
}

template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
    auto in = open_or_throw(path);
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        fn(j, line_no);
    }
}

}  // namespace detail

inline synonym_table load_synonyms(const std::string& path) {
    auto in = detail::open_or_throw(path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    std::map<std::string, std::string> entries;
    for (auto it = j.begin(); it != j.end(); ++it) {
        entries[it.key()] = it.value().get<std::string>();
    }
    return synonym_table::from_map(entries);
}

inline std::vector<caption_record> load_captions(const std::string& path) {
    std::vector<caption_record> out;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j, long line_no) {
        caption_record rec{j.at("image_id").get<std::string>(),
                           j.at("caption").get<std::string>()};
        if (rec.image_id.empty()) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": empty image_id");
        }
        out.push_back(std::move(rec));
    });
    return out;
}

inline std::vector<annotation_record> load_annotations(const std::string& path,
                                                       const synonym_table& vocabulary) {
    std::vector<annotation_record> out;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j, long line_no) {
        annotation_record rec;
        rec.image_id = j.at("image_id").get<std::string>();
        if (rec.image_id.empty()) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": empty image_id");
        }
        for (const auto& obj : j.at("objects")) {
            rec.objects.insert(vocabulary.canonicalize(obj.get<std::string>()));
        }
        out.push_back(std::move(rec));
    });
    return out;
}

inline std::vector<pope_record> load_pope(const std::string& path) {
    std::vector<pope_record> out;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j, long line_no) {
        pope_record rec;
        rec.question_id = j.at("question_id").get<std::string>();
        const auto setting = pope_setting_from_string(j.at("setting").get<std::string>());
        if (!setting) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": unknown setting '" +
                                     j.at("setting").get<std::string>() + "'");
        }
        rec.setting = *setting;
        const std::string label = detail::lowercase(j.at("label").get<std::string>());
        if (label != "yes" && label != "no") {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": label must be yes or no, got '" + label + "'");
        }
        rec.label_yes = label == "yes";
        rec.answer = j.at("answer").get<std::string>();
        out.push_back(std::move(rec));
    });
    return out;
}

inline nlohmann::json chair_to_json(const chair_result& r) {
    return nlohmann::json{{"c_s", r.c_s},
                          {"c_i", r.c_i},
                          {"f1", r.f1},
                          {"precision", r.precision},
                          {"recall", r.recall},
                          {"f1_micro", r.f1_micro},
                          {"precision_micro", r.precision_micro},
                          {"recall_micro", r.recall_micro},
                          {"n_captions", r.n_captions},
                          {"n_hal_captions", r.n_hal_captions},
                          {"n_objects_mentioned", r.n_objects_mentioned},
                          {"n_hal_objects", r.n_hal_objects}};
}

inline nlohmann::json pope_to_json(const pope_result& r) {
    nlohmann::json settings = nlohmann::json::object();
    for (const auto& [setting, s] : r.per_setting) {
        settings[to_string(setting)] = {{"tp", s.tp},       {"fp", s.fp},
                                        {"fn", s.fn},       {"tn", s.tn},
                                        {"precision", s.precision}, {"recall", s.recall},
                                        {"f1", s.f1},       {"accuracy", s.accuracy}};
    }
    return nlohmann::json{{"settings", settings}, {"average_f1", r.average_f1}};
}

}  // namespace sadi
