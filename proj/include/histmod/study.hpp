#pragma once

#include <algorithm>
#include <array>
#include <ctime>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "histmod/error.hpp"
#include "histmod/util.hpp"

namespace histmod::study {

using nlohmann::json;

enum class Kind { rating, comprehension };

inline Kind parse_kind(std::string_view s) {
    if (s == "rating") return Kind::rating;
    if (s == "comprehension") return Kind::comprehension;
    throw ValidationError("study", "kind must be 'rating' or 'comprehension'");
}
inline std::string kind_name(Kind k) { return k == Kind::rating ? "rating" : "comprehension"; }

inline const std::vector<std::string>& age_bands() {
    static const std::vector<std::string> v{"≤20", "21–30", "31–40", "41–50", "51–60", "61–70"};
    return v;
}

inline const std::vector<std::string>& familiarity_levels() {
    static const std::vector<std::string> v{"Unfamiliar",
                                            "Know what it is about",
                                            "Read fragments of an adaptation",
                                            "Read an adaptation",
                                            "Read fragments of the original",
                                            "Read the original",
                                            "Read a modernized version"};
    return v;
}

inline const std::array<std::string, 5>& rating_aspects() {
    static const std::array<std::string, 5> v{"fluency", "lexical_meaning", "syntax", "semantic", "modernization"};
    return v;
}

inline const std::array<std::string, 4>& comprehension_categories() {
    static const std::array<std::string, 4> v{"original", "modernized", "indifferent", "not_equal"};
    return v;
}

/// Canonical age band; ASCII spellings ("<=20", "21-30") are accepted.
inline std::string canonical_age_band(std::string s) {
    if (s == "<=20") return "≤20";
    if (s.size() == 5 && s[2] == '-') s = s.substr(0, 2) + "–" + s.substr(3);
    if (std::find(age_bands().begin(), age_bands().end(), s) == age_bands().end())
        throw ValidationError("study", "invalid age_band '" + s + "'");
    return s;
}

struct StudyItem {
    std::string id;
    std::string original;
    std::string modernized;
    std::string system;
};

struct Study {
    std::string id;
    Kind kind = Kind::comprehension;
    std::vector<StudyItem> items;
    std::vector<std::string> systems;
    std::string created;
};

struct Participant {
    std::string age_band;
    std::string familiarity;
    std::string rater; // display label for rating studies
};

struct Session {
    std::string id;
    std::string study_id;
    Participant participant;
    std::vector<std::size_t> order;    // item indices in presentation order
    std::vector<bool> original_first;  // per presented question
    std::uint64_t seed = 0;
};

struct Response {
    std::string session_id;
    std::size_t item = 0;             // item index
    std::string category;             // comprehension
    std::array<int, 5> ratings{};     // rating, in rating_aspects() order
};

/// Picks `per_system` items for every system, dropping items whose
/// modernization equals the original.
inline std::vector<StudyItem> sample_balanced_items(const std::vector<StudyItem>& candidates,
                                                    const std::vector<std::string>& systems,
                                                    std::size_t per_system, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<StudyItem> out;
    for (const auto& sys : systems) {
        std::vector<const StudyItem*> pool;
        for (const auto& c : candidates)
            if (c.system == sys && c.original != c.modernized) pool.push_back(&c);
        if (pool.size() < per_system)
            throw ValidationError("study", "system '" + sys + "' has only " + std::to_string(pool.size()) +
                                               " usable items, " + std::to_string(per_system) + " requested");
        for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng() % i]);
        for (std::size_t i = 0; i < per_system; ++i) out.push_back(*pool[i]);
    }
    return out;
}

namespace detail {

/// Percentages in tenths, half-up on exact integer arithmetic. When the
/// row misses 1000 tenths by more than one, largest remainders absorb the
/// difference.
inline std::vector<std::int64_t> percentage_tenths(const std::vector<std::int64_t>& counts) {
    std::int64_t n = 0;
    for (auto c : counts) n += c;
    std::vector<std::int64_t> tenths(counts.size());
    if (n == 0) return tenths;
    std::int64_t sum = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        tenths[i] = (counts[i] * 2000 + n) / (2 * n);
        sum += tenths[i];
    }
    if (std::abs(sum - 1000) <= 1) return tenths;
    std::vector<std::size_t> idx(counts.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        idx[i] = i;
        tenths[i] = counts[i] * 1000 / n;
    }
    // remainder of counts[i] * 1000 / n, largest first, lower index on ties
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return counts[a] * 1000 % n > counts[b] * 1000 % n;
    });
    std::int64_t missing = 1000;
    for (auto t : tenths) missing -= t;
    for (std::size_t k = 0; k < idx.size() && missing > 0; ++k, --missing) ++tenths[idx[k]];
    return tenths;
}

inline double mean(const std::vector<int>& v) {
    double s = 0;
    for (int x : v) s += x;
    return v.empty() ? 0.0 : s / double(v.size());
}

} // namespace detail

/// Study state rebuilt from an append-only JSON-lines event log. Every
/// mutation is validated, appended as one event, then applied, so the
/// in-memory state is always the replay of the log.
class StudyService {
public:
    StudyService() = default;

    explicit StudyService(std::filesystem::path log) : log_path_(std::move(log)) {
        if (std::filesystem::exists(*log_path_)) {
            std::size_t line_no = 0;
            for (const auto& line : read_lines(*log_path_)) {
                ++line_no;
                if (trim(line).empty()) continue;
                try {
                    apply(json::parse(line));
                } catch (const json::exception& e) {
                    throw InputError("study", log_path_->string() + ":" + std::to_string(line_no) +
                                                  ": malformed event: " + e.what());
                }
            }
        } else if (log_path_->has_parent_path()) {
            std::filesystem::create_directories(log_path_->parent_path());
        }
    }

    /// Replays events already in memory; used to audit determinism.
    static std::unique_ptr<StudyService> replay(const std::vector<json>& events) {
        auto s = std::make_unique<StudyService>();
        for (const auto& e : events) s->apply(e);
        return s;
    }

    std::vector<json> events() const {
        std::shared_lock lock(mutex_);
        return events_;
    }

    /// Body: {kind, systems, items:[{id, original, modernized, system}]}.
    json create_study(const json& body) {
        std::unique_lock lock(mutex_);
        Study st;
        try {
            st.kind = parse_kind(body.at("kind").get<std::string>());
            st.systems = body.value("systems", std::vector<std::string>{});
            for (const auto& it : body.at("items"))
                st.items.push_back({it.at("id").get<std::string>(), it.at("original").get<std::string>(),
                                    it.at("modernized").get<std::string>(), it.value("system", std::string())});
        } catch (const json::exception& e) {
            throw ValidationError("study", std::string("malformed study: ") + e.what());
        }
        if (st.items.empty()) throw ValidationError("study", "a study needs at least one item");
        std::unordered_map<std::string, int> ids;
        for (const auto& it : st.items) {
            if (ids[it.id]++) throw ValidationError("study", "duplicate item id '" + it.id + "'");
            if (trim(it.original).empty() || trim(it.modernized).empty())
                throw ValidationError("study", "item '" + it.id + "' has an empty text");
            if (it.original == it.modernized)
                throw ValidationError("study", "item '" + it.id +
                                                   "' is rejected: its modernization equals the original");
            if (st.kind == Kind::comprehension && it.system.empty())
                throw ValidationError("study", "comprehension item '" + it.id + "' must name its system");
            if (!it.system.empty() && std::find(st.systems.begin(), st.systems.end(), it.system) == st.systems.end())
                st.systems.push_back(it.system);
        }
        st.id = "study-" + std::to_string(studies_.size() + 1);
        st.created = body.value("created", utc_now());
        json items = json::array();
        for (const auto& it : st.items)
            items.push_back({{"id", it.id}, {"original", it.original}, {"modernized", it.modernized}, {"system", it.system}});
        const json ev{{"v", 1},
                      {"type", "study_created"},
                      {"study",
                       {{"id", st.id}, {"kind", kind_name(st.kind)}, {"systems", st.systems},
                        {"items", items}, {"created", st.created}}}};
        commit(ev);
        return {{"study_id", st.id}, {"items", st.items.size()}};
    }

    /// Body: {participant:{age_band, familiarity, rater?}, seed?}.
    json open_session(const std::string& study_id, const json& body) {
        std::unique_lock lock(mutex_);
        const auto sit = studies_.find(study_id);
        if (sit == studies_.end()) throw NotFoundError("study", "unknown study '" + study_id + "'");
        const Study& st = sit->second;
        Participant p;
        const json pj = body.value("participant", json::object());
        if (!pj.is_object()) throw ValidationError("study", "participant must be an object");
        const bool needs_demographics = st.kind == Kind::comprehension;
        if (pj.contains("age_band") || needs_demographics) {
            if (!pj.contains("age_band") || !pj["age_band"].is_string())
                throw ValidationError("study", "participant.age_band is required");
            p.age_band = canonical_age_band(pj["age_band"].get<std::string>());
        }
        if (pj.contains("familiarity") || needs_demographics) {
            if (!pj.contains("familiarity") || !pj["familiarity"].is_string())
                throw ValidationError("study", "participant.familiarity is required");
            p.familiarity = pj["familiarity"].get<std::string>();
            const auto& levels = familiarity_levels();
            if (std::find(levels.begin(), levels.end(), p.familiarity) == levels.end())
                throw ValidationError("study", "invalid familiarity '" + p.familiarity + "'");
        }
        if (pj.contains("rater")) {
            if (!pj["rater"].is_string()) throw ValidationError("study", "participant.rater must be a string");
            p.rater = pj["rater"].get<std::string>();
        }
        std::uint64_t seed;
        if (body.contains("seed") && !body["seed"].is_null()) {
            if (!body["seed"].is_number_integer() || body["seed"].get<std::int64_t>() < 0)
                throw ValidationError("study", "seed must be a non-negative integer");
            seed = body["seed"].get<std::uint64_t>();
        } else {
            std::random_device rd;
            seed = (std::uint64_t{rd()} << 32) | rd();
        }
        std::mt19937_64 rng(seed);
        std::vector<std::size_t> order(st.items.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
        json first = json::array();
        for (std::size_t i = 0; i < order.size(); ++i) first.push_back((rng() & 1u) ? "original" : "modernized");
        json ord = json::array();
        for (auto i : order) ord.push_back(st.items[i].id);
        const std::string id = "session-" + std::to_string(sessions_.size() + 1);
        json participant{{"age_band", p.age_band}, {"familiarity", p.familiarity}};
        if (!p.rater.empty()) participant["rater"] = p.rater;
        commit({{"v", 1},
                {"type", "session_opened"},
                {"session",
                 {{"id", id}, {"study", study_id}, {"participant", participant}, {"order", ord}, {"first", first},
                  {"seed", seed}}}});
        return {{"session_id", id}, {"questions", order.size()}};
    }

    /// Next unanswered question, or {"done": true}.
    json next_question(const std::string& session_id) const {
        std::shared_lock lock(mutex_);
        const Session& s = session(session_id);
        const Study& st = studies_.at(s.study_id);
        const auto& answered = answered_.at(session_id);
        for (std::size_t q = 0; q < s.order.size(); ++q) {
            if (answered[q]) continue;
            const StudyItem& item = st.items[s.order[q]];
            json out{{"question_id", "q" + std::to_string(q)}, {"position", q + 1}, {"total", s.order.size()}};
            if (st.kind == Kind::comprehension) {
                out["text_a"] = s.original_first[q] ? item.original : item.modernized;
                out["text_b"] = s.original_first[q] ? item.modernized : item.original;
            } else {
                out["original"] = item.original;
                out["modernized"] = item.modernized;
                out["aspects"] = rating_aspects();
            }
            return out;
        }
        return {{"done", true}, {"total", s.order.size()}};
    }

    /// Body: {question_id, choice} for comprehension (choice one of first,
    /// second, indifferent, not_equal) or {question_id, ratings:{aspect: 1..5}}.
    json record_response(const std::string& session_id, const json& body) {
        std::unique_lock lock(mutex_);
        const Session& s = session(session_id);
        const Study& st = studies_.at(s.study_id);
        if (!body.is_object() || !body.contains("question_id") || !body["question_id"].is_string())
            throw ValidationError("study", "question_id is required");
        const std::string qid = body["question_id"].get<std::string>();
        std::size_t q = 0;
        if (qid.size() < 2 || qid[0] != 'q' || !std::all_of(qid.begin() + 1, qid.end(), ::isdigit) ||
            (q = std::stoul(qid.substr(1))) >= s.order.size())
            throw NotFoundError("study", "unknown question '" + qid + "' in session '" + session_id + "'");
        if (answered_.at(session_id)[q])
            throw ConflictError("study", "question '" + qid + "' already answered in session '" + session_id + "'");
        json ev{{"v", 1},
                {"type", "response_recorded"},
                {"session", session_id},
                {"item", st.items[s.order[q]].id},
                {"timestamp", body.value("timestamp", utc_now())}};
        if (st.kind == Kind::comprehension) {
            const std::string choice = body.value("choice", std::string());
            std::string category;
            if (choice == "first") category = s.original_first[q] ? "original" : "modernized";
            else if (choice == "second") category = s.original_first[q] ? "modernized" : "original";
            else if (choice == "indifferent" || choice == "not_equal") category = choice;
            else throw ValidationError("study", "choice must be one of first, second, indifferent, not_equal");
            ev["choice"] = choice;
            ev["answer"] = category;
        } else {
            if (!body.contains("ratings") || !body["ratings"].is_object())
                throw ValidationError("study", "ratings object is required");
            const auto& r = body["ratings"];
            json ratings = json::object();
            for (const auto& [k, v] : r.items())
                if (std::find(rating_aspects().begin(), rating_aspects().end(), k) == rating_aspects().end())
                    throw ValidationError("study", "unknown rating aspect '" + k + "'");
            for (const auto& a : rating_aspects()) {
                if (!r.contains(a) || !r[a].is_number_integer())
                    throw ValidationError("study", "rating '" + a + "' must be an integer");
                const int v = r[a].get<int>();
                if (v < 1 || v > 5) throw ValidationError("study", "rating '" + a + "' must lie in 1-5, got " + std::to_string(v));
                ratings[a] = v;
            }
            ev["ratings"] = ratings;
        }
        commit(ev);
        std::size_t remaining = 0;
        for (bool a : answered_.at(session_id)) remaining += !a;
        return {{"recorded", true}, {"remaining", remaining}};
    }

    /// Aggregate report; a pure function of the event log.
    json report(const std::string& study_id) const {
        std::shared_lock lock(mutex_);
        const auto sit = studies_.find(study_id);
        if (sit == studies_.end()) throw NotFoundError("study", "unknown study '" + study_id + "'");
        const Study& st = sit->second;
        std::vector<const Response*> rs;
        for (const auto& r : responses_)
            if (sessions_.at(r.session_id).study_id == study_id) rs.push_back(&r);
        if (rs.empty()) return {{"study_id", study_id}, {"kind", kind_name(st.kind)}, {"empty", true}};

        json out{{"study_id", study_id}, {"kind", kind_name(st.kind)}, {"empty", false}, {"responses", rs.size()}};
        if (st.kind == Kind::comprehension) {
            std::map<std::string, std::vector<std::int64_t>> counts;
            for (const auto& sys : st.systems) counts[sys].assign(4, 0);
            for (const auto* r : rs) {
                auto& row = counts[st.items[r->item].system];
                row.resize(4);
                const auto& cats = comprehension_categories();
                ++row[static_cast<std::size_t>(std::find(cats.begin(), cats.end(), r->category) - cats.begin())];
            }
            json systems = json::object();
            for (const auto& [sys, row] : counts) {
                std::int64_t n = 0;
                for (auto c : row) n += c;
                json entry{{"responses", n}};
                const auto tenths = detail::percentage_tenths(row);
                for (std::size_t k = 0; k < 4; ++k) {
                    entry["counts"][comprehension_categories()[k]] = row[k];
                    entry[comprehension_categories()[k]] = double(tenths[k]) / 10.0;
                }
                systems[sys] = entry;
            }
            out["categories"] = comprehension_categories();
            out["systems"] = systems;
        } else {
            // system -> rater -> aspect -> scores
            std::map<std::string, std::map<std::string, std::array<std::vector<int>, 5>>> scores;
            for (const auto* r : rs) {
                const Session& s = sessions_.at(r->session_id);
                const std::string rater = s.participant.rater.empty() ? s.id : s.participant.rater;
                auto& cell = scores[st.items[r->item].system][rater];
                for (std::size_t a = 0; a < 5; ++a) cell[a].push_back(r->ratings[a]);
            }
            json systems = json::object();
            for (const auto& [sys, raters] : scores) {
                json rj = json::object();
                std::array<double, 5> sum{};
                for (const auto& [rater, cell] : raters) {
                    for (std::size_t a = 0; a < 5; ++a) {
                        const double m = detail::mean(cell[a]);
                        sum[a] += m;
                        rj[rater][rating_aspects()[a]] = round_half_up(m);
                    }
                }
                json avg = json::object();
                for (std::size_t a = 0; a < 5; ++a)
                    avg[rating_aspects()[a]] = round_half_up(sum[a] / double(raters.size()));
                systems[sys] = {{"raters", rj}, {"average", avg}};
            }
            out["aspects"] = rating_aspects();
            out["systems"] = systems;
        }
        json age = json::object(), fam = json::object();
        for (const auto& b : age_bands()) age[b] = 0;
        for (const auto& f : familiarity_levels()) fam[f] = 0;
        for (const auto& [id, s] : sessions_) {
            if (s.study_id != study_id) continue;
            if (!s.participant.age_band.empty()) age[s.participant.age_band] = age[s.participant.age_band].get<int>() + 1;
            if (!s.participant.familiarity.empty())
                fam[s.participant.familiarity] = fam[s.participant.familiarity].get<int>() + 1;
        }
        out["demographics"] = {{"age_band", age}, {"familiarity", fam}};
        return out;
    }

    const Study& study(const std::string& id) const {
        const auto it = studies_.find(id);
        if (it == studies_.end()) throw NotFoundError("study", "unknown study '" + id + "'");
        return it->second;
    }

    const Session& session(const std::string& id) const {
        const auto it = sessions_.find(id);
        if (it == sessions_.end()) throw NotFoundError("study", "unknown session '" + id + "'");
        return it->second;
    }

private:
    std::optional<std::filesystem::path> log_path_;
    mutable std::shared_mutex mutex_;
    std::vector<json> events_;
    std::map<std::string, Study> studies_;
    std::map<std::string, Session> sessions_;
    std::map<std::string, std::vector<bool>> answered_;
    std::vector<Response> responses_;

    static std::string utc_now() {
        const std::time_t now = std::time(nullptr);
        std::tm tm{};
        gmtime_r(&now, &tm);
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
        return buf;
    }

    void commit(const json& ev) {
        if (log_path_) {
            std::ofstream out(*log_path_, std::ios::app | std::ios::binary);
            if (!out) throw Error("study", "cannot append to event log " + log_path_->string());
            out << ev.dump() << '\n';
            out.flush();
            if (!out) throw Error("study", "write to event log failed");
        }
        apply(ev);
    }

    static std::size_t item_index(const Study& st, const std::string& id) {
        for (std::size_t i = 0; i < st.items.size(); ++i)
            if (st.items[i].id == id) return i;
        throw InputError("study", "event references unknown item '" + id + "'");
    }

    void apply(const json& ev) {
        if (ev.value("v", 0) != 1) throw InputError("study", "unsupported event version");
        const std::string type = ev.at("type").get<std::string>();
        if (type == "study_created") {
            const auto& sj = ev.at("study");
            Study st;
            st.id = sj.at("id").get<std::string>();
            st.kind = parse_kind(sj.at("kind").get<std::string>());
            st.systems = sj.at("systems").get<std::vector<std::string>>();
            st.created = sj.value("created", std::string());
            for (const auto& it : sj.at("items"))
                st.items.push_back({it.at("id"), it.at("original"), it.at("modernized"), it.value("system", "")});
            studies_[st.id] = std::move(st);
        } else if (type == "session_opened") {
            const auto& sj = ev.at("session");
            Session s;
            s.id = sj.at("id").get<std::string>();
            s.study_id = sj.at("study").get<std::string>();
            const Study& st = study(s.study_id);
            const auto& pj = sj.at("participant");
            s.participant = {pj.value("age_band", ""), pj.value("familiarity", ""), pj.value("rater", "")};
            for (const auto& id : sj.at("order")) s.order.push_back(item_index(st, id.get<std::string>()));
            for (const auto& f : sj.at("first")) s.original_first.push_back(f.get<std::string>() == "original");
            s.seed = sj.at("seed").get<std::uint64_t>();
            answered_[s.id].assign(s.order.size(), false);
            sessions_[s.id] = std::move(s);
        } else if (type == "response_recorded") {
            Response r;
            r.session_id = ev.at("session").get<std::string>();
            const Session& s = session(r.session_id);
            const Study& st = study(s.study_id);
            r.item = item_index(st, ev.at("item").get<std::string>());
            if (ev.contains("answer")) r.category = ev["answer"].get<std::string>();
            if (ev.contains("ratings"))
                for (std::size_t a = 0; a < 5; ++a) r.ratings[a] = ev["ratings"].at(rating_aspects()[a]).get<int>();
            const auto pos = static_cast<std::size_t>(std::find(s.order.begin(), s.order.end(), r.item) - s.order.begin());
            answered_[r.session_id][pos] = true;
            responses_.push_back(std::move(r));
        } else {
            throw InputError("study", "unknown event type '" + type + "'");
        }
        events_.push_back(ev);
    }
};

} // namespace histmod::study
