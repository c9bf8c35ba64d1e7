#include <doctest.h>

#include <json.hpp>
#include <set>
#include <thread>

#include "helpers.hpp"
#include "matsim/errors.hpp"
#include "matsim/service.hpp"
#include "matsim/synthetic.hpp"

// After the library headers: httplib drags in resolv.h, whose macros clash with Eigen.
#include <httplib.h>

using namespace matsim;
using nlohmann::json;

namespace {

struct Fixture {
    testing::TempDir dir;
    SyntheticDataset data;
    ServiceConfig config;

    Fixture() {
        SyntheticConfig sc;
        sc.n_materials = 8;
        sc.views_per_material = 2;
        sc.seed = 3;
        data = generate_synthetic(sc);
        config.state_dir = dir / "state";
        config.hit = {20, 2, 3};
        config.sampling.pairs_per_reference = 5;
        config.sampling.tste.max_iters = 100;
        config.admin_token = "secret";
        config.seed = 11;
    }
    AnnotationService make() const { return AnnotationService(data.bundle, config); }

    std::string material_of_view(const std::string& view) const {
        return data.bundle.views()[*data.bundle.view_index(view)].material_id;
    }
    // Consistent annotator: picks the candidate nearer to the reference in the planted geometry.
    std::string truthful_choice(const json& trial) const {
        const auto r = data.truth.index_of(material_of_view(trial["reference_view"]));
        const auto a = data.truth.index_of(material_of_view(trial["candidate_a_view"]));
        const auto b = data.truth.index_of(material_of_view(trial["candidate_b_view"]));
        return data.truth.distances(r, a) <= data.truth.distances(r, b) ? "a" : "b";
    }
};

json body(const ApiResponse& r) { return json::parse(r.body); }

std::string start(AnnotationService& s, const std::string& worker = "w1") {
    const auto r = s.create_session(json{{"worker", worker}}.dump());
    REQUIRE(r.status == 201);
    return body(r)["session_id"];
}

// Answers every trial with `choose`; returns the last acknowledgment.
template <typename Choose>
json run_session(AnnotationService& s, const std::string& id, Choose choose) {
    json ack;
    for (;;) {
        const auto next = s.next_trial(id);
        REQUIRE(next.status == 200);
        const auto trial = body(next);
        if (trial.contains("done")) break;
        for (const auto& key : {"kind", "type", "control", "training"}) CHECK_FALSE(trial.contains(key));
        CHECK(next.body.find("control") == std::string::npos);
        CHECK(next.body.find("training") == std::string::npos);
        const auto r = s.answer(id, json{{"trial_index", trial["trial_index"]}, {"chosen", choose(trial)}}.dump());
        REQUIRE(r.status == 200);
        CHECK(r.body.find("kind") == std::string::npos);
        ack = body(r);
        if (ack["remaining"] == 0) break;
    }
    return ack;
}

}  // namespace

TEST_CASE("a consistent worker completes a HIT and is merged") {
    Fixture f;
    auto s = f.make();
    CHECK(s.iteration() == 0);
    CHECK(s.plan().pairs.size() == 40);
    const auto id = start(s);
    const auto ack = run_session(s, id, [&](const json& t) { return f.truthful_choice(t); });
    CHECK(ack["accepted"] == true);
    const auto result = body(s.result(id));
    CHECK(result["status"] == "complete");
    CHECK(result["inconsistencies"] == 0);
    // Training trials stay out of the store: 15 unique + 3 controls.
    CHECK(s.answers().size() == 18);
    CHECK(s.answers().consistent());
    CHECK(read_answers(f.config.state_dir / "answers.jsonl").answers() == s.answers().answers());
    CHECK(s.next_trial(id).status == 410);
}

TEST_CASE("an inconsistent worker is rejected and contributes nothing") {
    Fixture f;
    auto s = f.make();
    const auto id = start(s);
    // Always picking the left candidate contradicts every side-swapped control.
    run_session(s, id, [](const json&) { return "a"; });
    const auto result = body(s.result(id));
    CHECK(result["status"] == "rejected");
    CHECK(result["inconsistencies"] == 3);
    CHECK(s.answers().empty());
    CHECK(read_answers(f.config.state_dir / "answers.jsonl").empty());
}

TEST_CASE("answer replays are idempotent") {
    Fixture f;
    auto s = f.make();
    const auto id = start(s);
    const auto first = s.answer(id, R"({"trial_index":0,"chosen":"b"})");
    REQUIRE(first.status == 200);
    const auto again = s.answer(id, R"({"trial_index":0,"chosen":"b"})");
    CHECK(again.status == 200);
    CHECK(again.body == first.body);
    CHECK(s.answer(id, R"({"trial_index":0,"chosen":"a"})").status == 409);
    CHECK(s.answer(id, R"({"trial_index":5,"chosen":"a"})").status == 409);
    CHECK(body(s.next_trial(id))["trial_index"] == 1);
}

TEST_CASE("request validation") {
    Fixture f;
    auto s = f.make();
    CHECK(s.create_session("not json").status == 400);
    CHECK(s.create_session(R"({"worker":""})").status == 400);
    CHECK(s.create_session(R"({"worker":"w","hit_size":3})").status == 400);
    CHECK(s.create_session(R"({"worker":"w","hit_size":-1})").status == 400);
    CHECK(s.next_trial("nope").status == 404);
    CHECK(s.result("nope").status == 404);
    CHECK(s.answer("nope", R"({"trial_index":0,"chosen":"a"})").status == 404);
    const auto id = start(s);
    CHECK(s.answer(id, R"({"trial_index":0,"chosen":"c"})").status == 400);
    CHECK(s.answer(id, R"({"chosen":"a"})").status == 400);
    CHECK(s.asset("nope").status == 404);
}

TEST_CASE("sessions get disjoint trials until the plan runs out") {
    Fixture f;
    auto s = f.make();
    std::set<ComparisonKey> seen;
    int created = 0;
    for (;;) {
        const auto r = s.create_session(R"({"worker":"w"})");
        if (r.status == 409) break;
        REQUIRE(r.status == 201);
        ++created;
        const auto id = body(r)["session_id"].get<std::string>();
        run_session(s, id, [&](const json& t) { return f.truthful_choice(t); });
        REQUIRE(created < 10);
    }
    // 40 plan pairs, 15 unique per HIT: two full HITs, a third topped up is impossible once answered.
    CHECK(created == 2);
    CHECK(s.answers().size() == 36);
    CHECK(s.coverage() == doctest::Approx(30.0 / 40.0));
}

TEST_CASE("state survives a restart") {
    Fixture f;
    std::string id;
    AnswerStore before;
    {
        auto s = f.make();
        const auto done = start(s);
        run_session(s, done, [&](const json& t) { return f.truthful_choice(t); });
        id = start(s, "w2");
        REQUIRE(s.answer(id, R"({"trial_index":0,"chosen":"a"})").status == 200);
        REQUIRE(s.answer(id, R"({"trial_index":1,"chosen":"b"})").status == 200);
        before = s.answers();
    }
    auto s = f.make();
    CHECK(s.answers().answers() == before.answers());
    CHECK(body(s.next_trial(id))["trial_index"] == 2);
    CHECK(s.answer(id, R"({"trial_index":1,"chosen":"b"})").status == 200);
    CHECK(s.iteration() == 0);
}

TEST_CASE("advancing the plan") {
    Fixture f;
    f.config.coverage_threshold = 0.7;
    auto s = f.make();
    CHECK(s.advance("").status == 401);
    CHECK(s.advance("Bearer wrong").status == 401);
    CHECK(s.advance("Bearer secret").status == 409);
    for (int i = 0; i < 2; ++i) run_session(s, start(s), [&](const json& t) { return f.truthful_choice(t); });
    const auto r = s.advance("Bearer secret");
    REQUIRE(r.status == 200);
    CHECK(body(r)["new_iteration"] == 1);
    CHECK(body(r)["mean_information_gain"].get<double>() >= 0.0);
    CHECK(s.iteration() == 1);
    const auto conv = body(s.convergence());
    CHECK(conv["iteration"] == 1);
    CHECK(conv["answers_total"] == 36);
    CHECK(conv["history"].size() == 1);
    CHECK(testing::read_text(f.config.state_dir / "convergence.csv").rfind("iteration,mean_ig\n1,", 0) == 0);
    // New plan pairs were never asked before.
    for (const auto& q : s.plan().pairs) CHECK(s.answers().find(q.reference, q.a, q.b) == nullptr);

    auto restarted = f.make();
    CHECK(restarted.iteration() == 1);
    CHECK(body(restarted.convergence())["history"].size() == 1);

    f.config.admin_token.clear();
    CHECK(f.make().advance("Bearer secret").status == 403);
}

TEST_CASE("display assets") {
    Fixture f;
    const auto assets = f.dir / "assets";
    std::filesystem::create_directories(assets);
    const auto& view = f.data.bundle.views()[0].view_id;
    testing::write_text(assets / (view + ".png"), "PNGDATA");
    save_dataset(f.data.bundle, f.dir / "ds");
    auto manifest = json::parse(testing::read_text(f.dir / "ds" / "manifest.json"));
    manifest["assets_dir"] = assets.string();
    testing::write_text(f.dir / "ds" / "manifest.json", manifest.dump());
    AnnotationService s(load_dataset(f.dir / "ds" / "manifest.json"), f.config);
    const auto r = s.asset(view);
    CHECK(r.status == 200);
    CHECK(r.content_type == "image/png");
    CHECK(r.body == "PNGDATA");
    CHECK(s.asset(f.data.bundle.views()[1].view_id).status == 404);
}

TEST_CASE("HTTP routes") {
    Fixture f;
    auto s = f.make();
    httplib::Server server;
    mount_routes(server, s, std::nullopt);
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client client("127.0.0.1", port);
    auto created = client.Post("/api/sessions", R"({"worker":"http"})", "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    CHECK(created->get_header_value("Content-Type") == "application/json");
    const auto id = json::parse(created->body)["session_id"].get<std::string>();

    auto next = client.Get("/api/sessions/" + id + "/next");
    REQUIRE(next);
    CHECK(next->status == 200);
    CHECK(json::parse(next->body)["trial_index"] == 0);
    auto ack = client.Post("/api/sessions/" + id + "/answer", R"({"trial_index":0,"chosen":"a"})", "application/json");
    REQUIRE(ack);
    CHECK(ack->status == 200);
    CHECK(json::parse(ack->body)["remaining"] == 19);
    CHECK(client.Get("/api/sessions/" + id + "/result")->status == 200);
    CHECK(client.Get("/api/sessions/zzz/next")->status == 404);
    CHECK(client.Get("/api/state/convergence")->status == 200);
    CHECK(client.Post("/api/state/advance", "", "application/json")->status == 401);
    httplib::Headers auth{{"Authorization", "Bearer secret"}};
    CHECK(client.Post("/api/state/advance", auth, "", "application/json")->status == 409);
    CHECK(client.Get("/api/assets/none")->status == 404);

    server.stop();
    worker.join();
}
