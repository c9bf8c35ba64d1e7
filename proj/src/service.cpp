#include "matsim/service.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include <httplib.h>

#include "matsim/errors.hpp"

namespace matsim {

using nlohmann::json;

namespace {

ApiResponse reply(int status, const json& body) { return {status, body.dump(), "application/json"}; }
ApiResponse error_reply(int status, const std::string& message) { return reply(status, json{{"error", message}}); }

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ComparisonKey key_of(const MaterialTriplet& t) { return ComparisonKey::of(t.reference, t.a, t.b); }

}  // namespace

const char* to_string(SessionStatus status) {
    switch (status) {
        case SessionStatus::Active: return "active";
        case SessionStatus::Complete: return "complete";
        case SessionStatus::Rejected: return "rejected";
    }
    return "active";
}

AnnotationService::AnnotationService(DatasetBundle bundle, ServiceConfig config)
    : bundle_(std::move(bundle)), config_(std::move(config)), rng_(config_.seed) {
    if (bundle_.materials().size() < 3) throw ValidationError("service: need at least 3 materials");
    config_.hit.validate();
    if (!(config_.coverage_threshold >= 0.0 && config_.coverage_threshold <= 1.0)) {
        throw ValidationError("service: coverage threshold must be in [0,1]");
    }
    std::filesystem::create_directories(config_.state_dir);
    journal_path_ = config_.state_dir / "journal.jsonl";
    replay();
    if (plan_.pairs.empty() && convergence_log_.empty() && sessions_.empty()) {
        auto sampling = config_.sampling;
        sampling.bootstrap = true;
        auto plan = select_next_pairs(bundle_.material_ids(), store_, sampling, 0, rng_);
        std::string shape, illumination;
        const auto& views = bundle_.views();
        // Pick one condition shared by every material, if there is one.
        std::vector<std::pair<std::string, std::string>> common;
        for (auto v : bundle_.views_of(0)) common.push_back({views[v].shape, views[v].illumination});
        std::erase_if(common, [&](const auto& c) {
            for (std::size_t m = 1; m < bundle_.materials().size(); ++m) {
                const auto& vs = bundle_.views_of(m);
                if (std::none_of(vs.begin(), vs.end(), [&](std::size_t v) {
                        return views[v].shape == c.first && views[v].illumination == c.second;
                    })) {
                    return true;
                }
            }
            return false;
        });
        if (!common.empty()) {
            std::tie(shape, illumination) = common[std::uniform_int_distribution<std::size_t>(0, common.size() - 1)(rng_)];
        }
        journal({{"event", "plan"}, {"plan", plan_to_json(plan)}, {"shape", shape}, {"illumination", illumination}});
        apply_plan(std::move(plan), shape, illumination);
    }
    persist_answers();
}

void AnnotationService::journal(const json& event) {
    std::lock_guard lock(journal_mutex_);
    std::ofstream out(journal_path_, std::ios::app);
    if (!out) throw ComputeError("cannot append to " + journal_path_.string());
    out << event.dump() << '\n';
    out.flush();
    if (!out) throw ComputeError("write failed: " + journal_path_.string());
}

void AnnotationService::replay() {
    std::ifstream in(journal_path_);
    if (!in) return;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto event = json::parse(line);
            const auto type = event.at("event").get<std::string>();
            if (type == "plan") {
                apply_plan(plan_from_json(event.at("plan")), event.value("shape", ""), event.value("illumination", ""));
            } else if (type == "session") {
                apply_session(event);
            } else if (type == "answer") {
                const auto session = find_session(event.at("session_id").get<std::string>());
                if (!session) throw ValidationError("answer for unknown session");
                apply_answer(*session, event.at("trial_index").get<std::size_t>(),
                             side_from_string(event.at("chosen").get<std::string>()),
                             event.at("timestamp").get<std::string>(), false);
            } else {
                throw ValidationError("unknown event " + type);
            }
        } catch (const json::exception& e) {
            throw ValidationError(journal_path_.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(journal_path_.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    rng_.seed(config_.seed ^ (0x9e3779b97f4a7c15ULL * (line_no + 1)));
}

void AnnotationService::apply_plan(SamplingPlan plan, std::string shape, std::string illumination) {
    if (!convergence_log_.empty() && plan.iteration <= convergence_log_.back().first) {
        throw ValidationError("plan iteration " + std::to_string(plan.iteration) + " does not advance");
    }
    if (plan.mean_information_gain) {
        convergence_log_.push_back({plan.iteration, *plan.mean_information_gain});
    }
    queue_ = plan.triplets();
    plan_ = std::move(plan);
    plan_shape_ = std::move(shape);
    plan_illumination_ = std::move(illumination);
}

void AnnotationService::apply_session(const json& event) {
    auto session = std::make_shared<Session>();
    session->id = event.at("session_id").get<std::string>();
    session->worker = event.at("worker").get<std::string>();
    std::set<ComparisonKey> taken;
    for (const auto& t : event.at("trials")) {
        ServedTrial trial;
        trial.triplet = {t.at("reference").get<std::string>(), t.at("a").get<std::string>(), t.at("b").get<std::string>()};
        trial.kind = kind_from_string(t.at("kind").get<std::string>());
        const auto views = t.at("views").get<std::vector<std::string>>();
        if (views.size() != 3) throw ValidationError("session trial needs 3 views");
        std::copy(views.begin(), views.end(), trial.views.begin());
        if (trial.kind == TrialKind::Trial) taken.insert(key_of(trial.triplet));
        session->trials.push_back(std::move(trial));
    }
    std::erase_if(queue_, [&](const MaterialTriplet& t) { return taken.count(key_of(t)) > 0; });
    sessions_[session->id] = std::move(session);
}

std::string AnnotationService::view_for(const std::string& material, const std::string& shape,
                                        const std::string& illumination) {
    const auto m = bundle_.material_index(material);
    if (!m) throw ValidationError("unknown material " + material);
    const auto& views = bundle_.views_of(*m);
    if (config_.asymmetric) {
        return bundle_.views()[views[std::uniform_int_distribution<std::size_t>(0, views.size() - 1)(rng_)]].view_id;
    }
    for (auto v : views) {
        if (bundle_.views()[v].shape == shape && bundle_.views()[v].illumination == illumination) {
            return bundle_.views()[v].view_id;
        }
    }
    return bundle_.views()[views.front()].view_id;
}

RowMatrix AnnotationService::obvious_points() const {
    if (embedding_) return embedding_->points;
    RowMatrix points = RowMatrix::Zero(static_cast<Index>(bundle_.materials().size()), bundle_.descriptors().cols());
    for (std::size_t m = 0; m < bundle_.materials().size(); ++m) {
        for (auto v : bundle_.views_of(m)) points.row(static_cast<Index>(m)) += bundle_.descriptors().row(static_cast<Index>(bundle_.views()[v].descriptor_row));
        points.row(static_cast<Index>(m)) /= static_cast<double>(bundle_.views_of(m).size());
    }
    return points;
}

std::shared_ptr<Session> AnnotationService::find_session(const std::string& id) const {
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

ApiResponse AnnotationService::create_session(const std::string& body) {
    json request;
    try {
        request = json::parse(body);
    } catch (const json::parse_error&) {
        return error_reply(400, "body is not valid JSON");
    }
    if (!request.is_object() || !request.contains("worker") || !request["worker"].is_string() ||
        request["worker"].get<std::string>().empty()) {
        return error_reply(400, "worker must be a non-empty string");
    }
    HitConfig hit = config_.hit;
    if (request.contains("hit_size")) {
        if (!request["hit_size"].is_number_unsigned()) return error_reply(400, "hit_size must be a positive integer");
        hit.hit_size = request["hit_size"].get<std::size_t>();
        try {
            hit.validate();
        } catch (const ValidationError& e) {
            return error_reply(400, e.what());
        }
    }

    std::lock_guard lock(state_mutex_);
    if (queue_.empty()) return error_reply(409, "no trials remain in the current plan");
    std::vector<MaterialTriplet> unique(queue_.begin(),
                                        queue_.begin() + static_cast<std::ptrdiff_t>(std::min(queue_.size(), hit.unique_trials())));
    if (unique.size() < hit.unique_trials()) {
        // Top up with plan trials handed out before but still unanswered.
        std::set<ComparisonKey> have;
        for (const auto& t : unique) have.insert(key_of(t));
        auto extra = plan_.triplets();
        std::erase_if(extra, [&](const MaterialTriplet& t) {
            return have.count(key_of(t)) > 0 || store_.find(t.reference, t.a, t.b) != nullptr;
        });
        std::shuffle(extra.begin(), extra.end(), rng_);
        for (auto& t : extra) {
            if (unique.size() == hit.unique_trials()) break;
            unique.push_back(std::move(t));
        }
        if (unique.size() < hit.unique_trials()) return error_reply(409, "not enough trials remain for a HIT");
    }
    HitPlan hit_plan;
    try {
        hit_plan = build_hit(unique, hit, bundle_.material_ids(), obvious_points(), rng_);
    } catch (const ValidationError& e) {
        return error_reply(409, e.what());
    }

    std::string id;
    do {
        std::ostringstream os;
        os << std::hex << rng_();
        id = os.str();
    } while (sessions_.count(id));

    json trials = json::array();
    for (const auto& t : hit_plan.trials) {
        trials.push_back({{"reference", t.triplet.reference},
                          {"a", t.triplet.a},
                          {"b", t.triplet.b},
                          {"kind", to_string(t.kind)},
                          {"views",
                           {view_for(t.triplet.reference, plan_shape_, plan_illumination_),
                            view_for(t.triplet.a, plan_shape_, plan_illumination_),
                            view_for(t.triplet.b, plan_shape_, plan_illumination_)}}});
    }
    json event = {{"event", "session"}, {"session_id", id}, {"worker", request["worker"]}, {"trials", trials}};
    journal(event);
    apply_session(event);
    return reply(201, {{"session_id", id}, {"trial_count", hit_plan.trials.size()}});
}

ApiResponse AnnotationService::next_trial(const std::string& session_id) {
    std::shared_ptr<Session> session;
    {
        std::lock_guard lock(state_mutex_);
        session = find_session(session_id);
    }
    if (!session) return error_reply(404, "unknown session");
    std::lock_guard lock(session->mutex);
    if (session->status != SessionStatus::Active) return error_reply(410, "session is " + std::string(to_string(session->status)));
    if (session->cursor >= session->trials.size()) return reply(200, {{"done", true}});
    const auto& t = session->trials[session->cursor];
    return reply(200, {{"trial_index", session->cursor},
                       {"trial_count", session->trials.size()},
                       {"reference_view", t.views[0]},
                       {"candidate_a_view", t.views[1]},
                       {"candidate_b_view", t.views[2]}});
}

ApiResponse AnnotationService::apply_answer(Session& session, std::size_t trial_index, Side chosen,
                                            const std::string& timestamp, bool live) {
    if (trial_index < session.cursor) {
        if (session.answers[trial_index].chosen != chosen) {
            return error_reply(409, "trial " + std::to_string(trial_index) + " was already answered differently");
        }
        return {200, session.acks[trial_index], "application/json"};
    }
    if (session.status != SessionStatus::Active) return error_reply(410, "session is " + std::string(to_string(session.status)));
    if (trial_index != session.cursor) {
        return error_reply(409, "expected trial_index " + std::to_string(session.cursor));
    }
    if (live) {
        journal({{"event", "answer"},
                 {"session_id", session.id},
                 {"trial_index", trial_index},
                 {"chosen", to_string(chosen)},
                 {"timestamp", timestamp}});
    }
    const auto& t = session.trials[trial_index];
    session.answers.push_back({t.triplet.reference, t.triplet.a, t.triplet.b, chosen, session.worker, t.kind, timestamp});
    ++session.cursor;
    const std::size_t remaining = session.trials.size() - session.cursor;
    session.acks.push_back(json{{"accepted", true}, {"remaining", remaining}}.dump());

    if (remaining == 0) {
        const auto verdict = judge_worker(session.answers);
        session.inconsistencies = verdict.inconsistencies;
        std::lock_guard lock(state_mutex_);
        if (verdict.valid) {
            session.status = SessionStatus::Complete;
            for (const auto& a : session.answers) {
                if (a.kind != TrialKind::Training) store_.add(a);
            }
            if (live) persist_answers();
        } else {
            session.status = SessionStatus::Rejected;
            // Hand the rejected session's comparisons out again if they are still in the plan.
            const auto plan_trials = plan_.triplets();
            std::set<ComparisonKey> in_plan;
            for (const auto& p : plan_trials) in_plan.insert(key_of(p));
            for (const auto& st : session.trials) {
                if (st.kind == TrialKind::Trial && in_plan.count(key_of(st.triplet)) &&
                    !store_.find(st.triplet.reference, st.triplet.a, st.triplet.b)) {
                    queue_.push_back(st.triplet);
                }
            }
        }
    }
    return {200, session.acks.back(), "application/json"};
}

ApiResponse AnnotationService::answer(const std::string& session_id, const std::string& body) {
    json request;
    try {
        request = json::parse(body);
    } catch (const json::parse_error&) {
        return error_reply(400, "body is not valid JSON");
    }
    if (!request.is_object() || !request.contains("trial_index") || !request["trial_index"].is_number_unsigned() ||
        !request.contains("chosen") || !request["chosen"].is_string()) {
        return error_reply(400, "expected {trial_index, chosen}");
    }
    const auto choice = request["chosen"].get<std::string>();
    if (choice != "a" && choice != "b") return error_reply(400, "chosen must be \"a\" or \"b\"");
    std::shared_ptr<Session> session;
    {
        std::lock_guard lock(state_mutex_);
        session = find_session(session_id);
    }
    if (!session) return error_reply(404, "unknown session");
    std::lock_guard lock(session->mutex);
    return apply_answer(*session, request["trial_index"].get<std::size_t>(), choice == "a" ? Side::A : Side::B,
                        utc_now(), true);
}

ApiResponse AnnotationService::result(const std::string& session_id) {
    std::shared_ptr<Session> session;
    {
        std::lock_guard lock(state_mutex_);
        session = find_session(session_id);
    }
    if (!session) return error_reply(404, "unknown session");
    std::lock_guard lock(session->mutex);
    return reply(200, {{"status", to_string(session->status)},
                       {"inconsistencies", session->inconsistencies ? json(*session->inconsistencies) : json(nullptr)}});
}

double AnnotationService::coverage() const {
    if (plan_.pairs.empty()) return 1.0;
    std::size_t answered = 0;
    for (const auto& p : plan_.pairs) answered += store_.find(p.reference, p.a, p.b) != nullptr;
    return static_cast<double>(answered) / static_cast<double>(plan_.pairs.size());
}

ApiResponse AnnotationService::convergence() {
    std::lock_guard lock(state_mutex_);
    json history = json::array();
    for (const auto& [it, ig] : convergence_log_) history.push_back({{"iteration", it}, {"mean_ig", ig}});
    return reply(200, {{"iteration", plan_.iteration},
                       {"mean_information_gain",
                        plan_.mean_information_gain ? json(*plan_.mean_information_gain) : json(nullptr)},
                       {"answers_total", store_.size()},
                       {"coverage", coverage()},
                       {"history", history}});
}

ApiResponse AnnotationService::advance(const std::string& authorization) {
    if (config_.admin_token.empty()) return error_reply(403, "advancing is disabled: no admin token configured");
    if (authorization != "Bearer " + config_.admin_token) return error_reply(401, "invalid admin token");
    std::lock_guard lock(state_mutex_);
    const double cov = coverage();
    if (cov < config_.coverage_threshold) {
        return reply(409, {{"error", "current plan is not sufficiently answered"},
                           {"coverage", cov},
                           {"threshold", config_.coverage_threshold}});
    }
    TsteEmbedding embedding;
    auto plan = select_next_pairs(bundle_.material_ids(), store_, config_.sampling, plan_.iteration + 1, rng_, {},
                                  &embedding);
    journal({{"event", "plan"}, {"plan", plan_to_json(plan)}, {"shape", plan_shape_}, {"illumination", plan_illumination_}});
    if (plan.mean_information_gain) {
        append_convergence_log(config_.state_dir / "convergence.csv", plan.iteration, *plan.mean_information_gain);
    }
    if (embedding.points.rows() > 0) embedding_ = std::move(embedding);
    const auto iteration = plan.iteration;
    const auto ig = plan.mean_information_gain;
    apply_plan(std::move(plan), plan_shape_, plan_illumination_);
    return reply(200, {{"new_iteration", iteration}, {"mean_information_gain", ig ? json(*ig) : json(nullptr)}});
}

ApiResponse AnnotationService::asset(const std::string& view_id) const {
    if (!bundle_.view_index(view_id) || !bundle_.assets_dir()) return error_reply(404, "no asset for " + view_id);
    static const std::pair<const char*, const char*> kTypes[] = {
        {".png", "image/png"}, {".jpg", "image/jpeg"}, {".jpeg", "image/jpeg"}, {".webp", "image/webp"}};
    for (const auto& [ext, type] : kTypes) {
        const auto path = *bundle_.assets_dir() / (view_id + ext);
        std::ifstream in(path, std::ios::binary);
        if (!in) continue;
        std::ostringstream bytes;
        bytes << in.rdbuf();
        return {200, bytes.str(), type};
    }
    return error_reply(404, "no asset for " + view_id);
}

AnswerStore AnnotationService::answers() const {
    std::lock_guard lock(state_mutex_);
    return store_;
}

std::size_t AnnotationService::iteration() const {
    std::lock_guard lock(state_mutex_);
    return plan_.iteration;
}

void AnnotationService::persist_answers() const { write_answers(config_.state_dir / "answers.jsonl", store_); }

void mount_routes(httplib::Server& server, AnnotationService& service,
                  const std::optional<std::filesystem::path>& static_dir) {
    auto send = [](httplib::Response& res, const ApiResponse& r) {
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    auto guarded = [send](auto fn) {
        return [send, fn](const httplib::Request& req, httplib::Response& res) {
            try {
                send(res, fn(req));
            } catch (const ValidationError& e) {
                send(res, error_reply(400, e.what()));
            } catch (const std::exception& e) {
                send(res, error_reply(500, e.what()));
            }
        };
    };
    server.Post("/api/sessions", guarded([&](const httplib::Request& req) { return service.create_session(req.body); }));
    server.Get(R"(/api/sessions/([^/]+)/next)",
               guarded([&](const httplib::Request& req) { return service.next_trial(req.matches[1]); }));
    server.Post(R"(/api/sessions/([^/]+)/answer)",
                guarded([&](const httplib::Request& req) { return service.answer(req.matches[1], req.body); }));
    server.Get(R"(/api/sessions/([^/]+)/result)",
               guarded([&](const httplib::Request& req) { return service.result(req.matches[1]); }));
    server.Get("/api/state/convergence", guarded([&](const httplib::Request&) { return service.convergence(); }));
    server.Post("/api/state/advance", guarded([&](const httplib::Request& req) {
                    return service.advance(req.get_header_value("Authorization"));
                }));
    server.Get(R"(/api/assets/([^/]+))",
               guarded([&](const httplib::Request& req) { return service.asset(req.matches[1]); }));
    if (static_dir && !server.set_mount_point("/", static_dir->string())) {
        throw ValidationError("static directory not found: " + static_dir->string());
    }
}

}  // namespace matsim
