#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace matsim {

enum class Side { A, B };
enum class TrialKind { Trial, Control, Training };

const char* to_string(Side side);
const char* to_string(TrialKind kind);
Side side_from_string(const std::string& text);
TrialKind kind_from_string(const std::string& text);

/// A reference material and two candidates, in presentation order.
struct MaterialTriplet {
    std::string reference;
    std::string a;
    std::string b;

    bool operator==(const MaterialTriplet&) const = default;
};

/// One 2AFC vote: which of option_a / option_b looks more like the reference.
struct TripletAnswer {
    std::string reference;
    std::string option_a;
    std::string option_b;
    Side chosen = Side::A;
    std::string worker;
    TrialKind kind = TrialKind::Trial;
    std::string timestamp;

    const std::string& chosen_material() const { return chosen == Side::A ? option_a : option_b; }
    const std::string& other_material() const { return chosen == Side::A ? option_b : option_a; }

    bool operator==(const TripletAnswer&) const = default;
};

/// Side-order independent key: `first < second` lexicographically.
struct ComparisonKey {
    std::string reference;
    std::string first;
    std::string second;

    static ComparisonKey of(const std::string& reference, const std::string& x, const std::string& y);

    auto operator<=>(const ComparisonKey&) const = default;
};

struct VoteTally {
    std::size_t first = 0;
    std::size_t second = 0;

    std::size_t total() const { return first + second; }
    bool tied() const { return first == second; }

    bool operator==(const VoteTally&) const = default;
};

/// Collected answers plus per-comparison vote tallies keyed by ComparisonKey.
class AnswerStore {
public:
    /// Throws ValidationError when the three materials are not pairwise distinct.
    void add(TripletAnswer answer);

    const std::vector<TripletAnswer>& answers() const { return answers_; }
    const std::map<ComparisonKey, VoteTally>& tallies() const { return tallies_; }
    std::size_t size() const { return answers_.size(); }
    bool empty() const { return answers_.empty(); }

    const VoteTally* find(const std::string& reference, const std::string& x, const std::string& y) const;

    /// Material chosen by the majority of votes, or nullopt on a tie or no votes.
    std::optional<std::string> majority(const ComparisonKey& key) const;

    /// Whether the stored tallies equal a full recount of answers().
    bool consistent() const;

    /// Every material id that appears in any answer, sorted.
    std::vector<std::string> material_ids() const;

private:
    std::vector<TripletAnswer> answers_;
    std::map<ComparisonKey, VoteTally> tallies_;
};

/// JSON-lines: one TripletAnswer object per line.
AnswerStore read_answers(const std::filesystem::path& path);
void write_answers(const std::filesystem::path& path, const AnswerStore& store);

std::string answer_to_json_line(const TripletAnswer& answer);
TripletAnswer answer_from_json_line(const std::string& line);

}  // namespace matsim
