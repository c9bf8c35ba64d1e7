#include "matsim/answers.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "matsim/errors.hpp"

namespace matsim {

const char* to_string(Side side) { return side == Side::A ? "A" : "B"; }

const char* to_string(TrialKind kind) {
    switch (kind) {
        case TrialKind::Trial: return "trial";
        case TrialKind::Control: return "control";
        case TrialKind::Training: return "training";
    }
    return "trial";
}

Side side_from_string(const std::string& text) {
    if (text == "A" || text == "a") return Side::A;
    if (text == "B" || text == "b") return Side::B;
    throw ValidationError("invalid side '" + text + "'");
}

TrialKind kind_from_string(const std::string& text) {
    if (text == "trial") return TrialKind::Trial;
    if (text == "control") return TrialKind::Control;
    if (text == "training") return TrialKind::Training;
    throw ValidationError("invalid trial kind '" + text + "'");
}

ComparisonKey ComparisonKey::of(const std::string& reference, const std::string& x, const std::string& y) {
    return x < y ? ComparisonKey{reference, x, y} : ComparisonKey{reference, y, x};
}

void AnswerStore::add(TripletAnswer answer) {
    if (answer.reference == answer.option_a || answer.reference == answer.option_b ||
        answer.option_a == answer.option_b) {
        throw ValidationError("answer materials must be pairwise distinct (" + answer.reference + ", " +
                              answer.option_a + ", " + answer.option_b + ")");
    }
    if (answer.chosen != Side::A && answer.chosen != Side::B) throw ValidationError("answer side is not A or B");
    auto key = ComparisonKey::of(answer.reference, answer.option_a, answer.option_b);
    auto& tally = tallies_[key];
    if (answer.chosen_material() == key.first) {
        ++tally.first;
    } else {
        ++tally.second;
    }
    answers_.push_back(std::move(answer));
}

const VoteTally* AnswerStore::find(const std::string& reference, const std::string& x, const std::string& y) const {
    const auto it = tallies_.find(ComparisonKey::of(reference, x, y));
    return it == tallies_.end() ? nullptr : &it->second;
}

std::optional<std::string> AnswerStore::majority(const ComparisonKey& key) const {
    const auto it = tallies_.find(key);
    if (it == tallies_.end() || it->second.tied()) return std::nullopt;
    return it->second.first > it->second.second ? key.first : key.second;
}

bool AnswerStore::consistent() const {
    AnswerStore recount;
    for (const auto& a : answers_) recount.add(a);
    return recount.tallies_ == tallies_;
}

std::vector<std::string> AnswerStore::material_ids() const {
    std::set<std::string> ids;
    for (const auto& a : answers_) {
        ids.insert(a.reference);
        ids.insert(a.option_a);
        ids.insert(a.option_b);
    }
    return {ids.begin(), ids.end()};
}

std::string answer_to_json_line(const TripletAnswer& a) {
    nlohmann::ordered_json j;
    j["reference"] = a.reference;
    j["option_a"] = a.option_a;
    j["option_b"] = a.option_b;
    j["chosen"] = to_string(a.chosen);
    j["worker"] = a.worker;
    j["kind"] = to_string(a.kind);
    j["timestamp"] = a.timestamp;
    return j.dump();
}

TripletAnswer answer_from_json_line(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
        TripletAnswer a;
        a.reference = j.at("reference").get<std::string>();
        a.option_a = j.at("option_a").get<std::string>();
        a.option_b = j.at("option_b").get<std::string>();
        a.chosen = side_from_string(j.at("chosen").get<std::string>());
        a.worker = j.value("worker", std::string{});
        a.kind = kind_from_string(j.value("kind", std::string{"trial"}));
        a.timestamp = j.value("timestamp", std::string{});
        return a;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed answer: ") + e.what());
    }
}

AnswerStore read_answers(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("missing file: " + path.string());
    AnswerStore store;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            store.add(answer_from_json_line(line));
        } catch (const ValidationError& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return store;
}

void write_answers(const std::filesystem::path& path, const AnswerStore& store) {
    std::ofstream out(path);
    if (!out) throw ComputeError("cannot write " + path.string());
    for (const auto& a : store.answers()) out << answer_to_json_line(a) << '\n';
}

}  // namespace matsim
