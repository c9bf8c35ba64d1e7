#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "matsim/answers.hpp"
#include "matsim/dataset.hpp"
#include "matsim/sampling.hpp"

namespace httplib {
class Server;
}

namespace matsim {

struct ServiceConfig {
    std::filesystem::path state_dir;  // journal.jsonl, answers.jsonl, convergence.csv
    HitConfig hit;
    SamplingConfig sampling;
    bool asymmetric = false;        // random view condition per triplet item
    double coverage_threshold = 0.8;  // answered fraction of the plan required to advance
    std::string admin_token;        // empty: advancing is disabled
    std::uint64_t seed = 0;
};

struct ApiResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

enum class SessionStatus { Active, Complete, Rejected };
const char* to_string(SessionStatus status);

struct ServedTrial {
    MaterialTriplet triplet;
    TrialKind kind = TrialKind::Trial;
    std::array<std::string, 3> views;  // reference, candidate a, candidate b
};

struct Session {
    std::string id;
    std::string worker;
    std::vector<ServedTrial> trials;
    std::size_t cursor = 0;
    std::vector<TripletAnswer> answers;
    std::vector<std::string> acks;  // acknowledgment body per answered index
    SessionStatus status = SessionStatus::Active;
    std::optional<std::size_t> inconsistencies;
    std::mutex mutex;
};

/// Annotation session state machine. Every mutation is appended to a JSON-lines
/// journal in the state directory and replayed on construction.
class AnnotationService {
public:
    AnnotationService(DatasetBundle bundle, ServiceConfig config);

    ApiResponse create_session(const std::string& body);
    ApiResponse next_trial(const std::string& session_id);
    ApiResponse answer(const std::string& session_id, const std::string& body);
    ApiResponse result(const std::string& session_id);
    ApiResponse convergence();
    ApiResponse advance(const std::string& authorization);
    ApiResponse asset(const std::string& view_id) const;

    /// Snapshot of the answers merged from valid sessions.
    AnswerStore answers() const;
    std::size_t iteration() const;
    const SamplingPlan& plan() const { return plan_; }
    double coverage() const;

private:
    void replay();
    void journal(const nlohmann::json& event);
    void apply_plan(SamplingPlan plan, std::string shape, std::string illumination);
    void apply_session(const nlohmann::json& event);
    ApiResponse apply_answer(Session& session, std::size_t trial_index, Side chosen, const std::string& timestamp,
                             bool live);
    std::string view_for(const std::string& material, const std::string& shape, const std::string& illumination);
    std::shared_ptr<Session> find_session(const std::string& id) const;
    RowMatrix obvious_points() const;
    void persist_answers() const;

    DatasetBundle bundle_;
    ServiceConfig config_;
    std::filesystem::path journal_path_;
    mutable std::mutex state_mutex_;
    std::mutex journal_mutex_;
    std::mt19937_64 rng_;

    AnswerStore store_;
    SamplingPlan plan_;
    std::string plan_shape_, plan_illumination_;
    std::vector<MaterialTriplet> queue_;  // plan trials not yet handed to a session
    std::vector<std::pair<std::size_t, double>> convergence_log_;
    std::optional<TsteEmbedding> embedding_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
};

/// Routes under /api plus static files from `static_dir` at / when given.
void mount_routes(httplib::Server& server, AnnotationService& service,
                  const std::optional<std::filesystem::path>& static_dir);

}  // namespace matsim
