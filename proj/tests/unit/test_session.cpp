#include <doctest.h>

#include <atomic>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include "ptune/error.hpp"
#include "ptune/serialize.hpp"
#include "ptune/session.hpp"
#include "support.hpp"
// after Eigen users, see src/http.cpp
#include <httplib.h>

using namespace ptune;
using namespace ptune::session;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// HTTP server on an ephemeral port, stopped on destruction.
struct RunningServer {
  HttpServer server;
  int port = 0;
  std::thread thread;

  explicit RunningServer(Service& service) : server(service) {
    port = server.bind_any_port("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~RunningServer() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(120, 0);
    return c;
  }
};

}  // namespace

TEST_SUITE("session") {
  TEST_CASE("profile store round trip") {
    test::TempDir dir;
    ProfileStore store(dir.path);
    const TuningProfile p = TuningProfile(TuningParams{}, "TF 01", 2, "2026-05-01T10:00:00Z").with(Parameter::pushoff, 20.0);
    const std::string id = store.save(p);
    CHECK(id == "tf-01");
    CHECK(store.load(id) == p);
    REQUIRE(store.list().size() == 1);
    CHECK(store.list()[0].name == "TF 01");
    CHECK(code_of([&] { store.load("missing"); }) == ErrorCode::NotFound);
    CHECK(code_of([&] { store.load("../etc"); }) == ErrorCode::NotFound);
    CHECK(code_of([&] { store.save(io::json::parse(R"({"name": "x", "params": {"pushoff_pct": 61}})")); }) ==
          ErrorCode::ValidationFailed);
    CHECK(store.list().size() == 1);
  }

  TEST_CASE("session log timestamps never go backwards") {
    test::TempDir dir;
    SessionLog log(dir.path / "log.jsonl");
    log.append({"2026-05-01T10:00:05Z", TuningProfile{}, {"sitstand"}, 0.1, {}, "h1", "a"});
    log.append({"2026-05-01T10:00:01Z", TuningProfile{}, {}, 0.0, {}, "h1", "b"});
    log.append({"2026-05-01T10:00:09Z", TuningProfile{}, {}, 0.0, {}, "h1", "c"});
    const auto e = log.entries();
    REQUIRE(e.size() == 3);
    for (std::size_t i = 1; i < e.size(); ++i) CHECK(e[i].timestamp >= e[i - 1].timestamp);
    CHECK(e[1].timestamp == "2026-05-01T10:00:05Z");
    CHECK(e[0].regenerated == std::vector<std::string>{"sitstand"});

    // reopening keeps the ordering guarantee
    SessionLog again(dir.path / "log.jsonl");
    again.append({"2026-05-01T09:00:00Z", TuningProfile{}, {}, 0.0, {}, "h1", "d"});
    CHECK(again.entries().back().timestamp == "2026-05-01T10:00:09Z");
  }

  TEST_CASE("archive export, import and re-export are byte-identical") {
    test::TempDir dir;
    const ModelBundle& b = test::baseline();
    const ExportResult first = export_bundle(b, dir.path / "a.ptb");
    const ModelBundle back = import_bundle(first.path);
    CHECK(back.hash() == b.hash());
    const ExportResult second = export_bundle(back, dir.path / "b.ptb");
    CHECK(slurp(first.path) == slurp(second.path));
    CHECK(first.digest == second.digest);
    CHECK(first.bytes == slurp(first.path).size());
  }

  TEST_CASE("archive integrity errors") {
    const std::string bytes = encode_archive(test::baseline());
    CHECK(code_of([&] { decode_archive(bytes.substr(0, bytes.size() - 10)); }) == ErrorCode::DigestMismatch);
    std::string flipped = bytes;
    flipped[flipped.size() / 2] = flipped[flipped.size() / 2] == '1' ? '2' : '1';
    CHECK(code_of([&] { decode_archive(flipped); }) == ErrorCode::DigestMismatch);
    std::string bumped = bytes;
    bumped.replace(bumped.find(" 1 "), 3, " 2 ");
    CHECK(code_of([&] { decode_archive(bumped); }) == ErrorCode::VersionUnsupported);
    CHECK(code_of([] { decode_archive("hello\nworld"); }) == ErrorCode::SchemaMismatch);

    ModelBundle staged = test::baseline();
    staged.stage(staged.profile.with(Parameter::pushoff, 10.0));
    test::TempDir dir;
    CHECK(code_of([&] { export_bundle(staged, dir.path / "x.ptb"); }) == ErrorCode::DirtyBundle);
    CHECK(!fs::exists(dir.path / "x.ptb"));
  }

  TEST_CASE("service regeneration, log replay and preview") {
    test::TempDir dir;
    Service service(test::dataset(), test::baseline(), dir.path);
    const TuningProfile base = service.current()->profile;

    const RegenerateOutcome same = service.regenerate(base, "no-op");
    CHECK(same.regenerated.empty());
    CHECK(same.hash == test::baseline().hash());

    const TuningProfile tuned = base.with(Parameter::pushoff, 25.0).with(Parameter::sit_to_stand, 10.0);
    const RegenerateOutcome out = service.regenerate(tuned, "tune");
    CHECK(out.regenerated == std::vector<std::string>{"impedance.ankle", "sitstand"});
    CHECK(out.version == base.version + 1);
    CHECK(service.current()->hash() == out.hash);
    CHECK(service.baseline().hash() == test::baseline().hash());

    // replaying the logged profiles from the baseline reproduces every logged digest
    const auto entries = service.log().entries();
    REQUIRE(entries.size() == 2);
    ModelBundle replay = test::baseline();
    for (const auto& e : entries) {
      replay = regenerate(replay, e.profile, test::dataset()).bundle;
      CHECK(replay.hash() == e.hash);
    }

    const io::json p = service.preview({1.0, 0.0}, Joint::ankle);
    CHECK(p.at("target_peak_ratio").get<double>() == doctest::Approx(1.25).epsilon(1e-9));
    CHECK(p.at("commanded_peak_ratio").get<double>() > 1.0);
    CHECK(p.at("phase").size() == p.at("tuned_target").size());
    const io::json knee = service.preview({1.2, 5.0}, Joint::knee);
    CHECK(knee.at("target_peak_ratio").get<double>() == 1.0);
    CHECK(code_of([&] { service.preview({3.0, 0.0}, Joint::ankle); }) == ErrorCode::NotFound);

    const ExportResult ex = service.export_current();
    CHECK(fs::exists(ex.path));
    CHECK(import_bundle(ex.path).hash() == out.hash);
  }

  TEST_CASE("status codes") {
    CHECK(http_status(ErrorCode::Busy) == 409);
    CHECK(http_status(ErrorCode::DirtyBundle) == 409);
    CHECK(http_status(ErrorCode::NotFound) == 404);
    CHECK(http_status(ErrorCode::ValidationFailed) == 400);
    CHECK(http_status(ErrorCode::RegenerationRejected) == 422);
    CHECK(http_status(ErrorCode::NonConvergence) == 500);
  }

  TEST_CASE("concurrent regeneration is refused with 409") {
    test::TempDir dir;
    std::atomic<bool> armed{true};
    std::promise<void> entered;
    std::promise<void> release;
    std::shared_future<void> released = release.get_future().share();
    Service::Hooks hooks;
    hooks.during_regeneration = [&] {
      if (armed.exchange(false)) {
        entered.set_value();
        released.wait();
      }
    };
    Service service(test::dataset(), test::baseline(), dir.path, hooks);
    RunningServer http(service);

    auto first = std::async(std::launch::async, [&] {
      return service.regenerate(service.current()->profile.with(Parameter::sit_to_stand, 5.0));
    });
    entered.get_future().wait();

    CHECK(code_of([&] { service.regenerate(TuningProfile{}); }) == ErrorCode::Busy);
    auto client = http.client();
    const auto res = client.Post("/bundle/regenerate", R"({"params": {"sit_to_stand_pct": 15}})", "application/json");
    REQUIRE(res);
    CHECK(res->status == 409);
    CHECK(io::json::parse(res->body).at("error") == "Busy");

    release.set_value();
    CHECK(first.get().regenerated == std::vector<std::string>{"sitstand"});
    const auto ok = client.Post("/bundle/regenerate", R"({"params": {"sit_to_stand_pct": 15}})", "application/json");
    REQUIRE(ok);
    CHECK(ok->status == 200);
    CHECK(io::json::parse(ok->body).at("version") == 2);
  }

  TEST_CASE("http api") {
    test::TempDir dir;
    Service service(test::dataset(), test::baseline(), dir.path);
    RunningServer http(service);
    auto client = http.client();

    SUBCASE("profiles") {
      auto created = client.Post("/profiles", R"({"name": "TF02", "params": {"pushoff_pct": 12}})", "application/json");
      REQUIRE(created);
      CHECK(created->status == 201);
      CHECK(io::json::parse(created->body).at("id") == "tf02");
      auto bad = client.Post("/profiles", R"({"name": "TF03", "params": {"pushoff_pct": 61}})", "application/json");
      REQUIRE(bad);
      CHECK(bad->status == 400);
      CHECK(client.Post("/profiles", "{not json", "application/json")->status == 400);
      auto list = client.Get("/profiles");
      REQUIRE(list);
      CHECK(io::json::parse(list->body).size() == 1);
      auto one = client.Get("/profiles/tf02");
      REQUIRE(one);
      CHECK(io::json::parse(one->body).at("params").at("pushoff_pct") == 12.0);
      CHECK(client.Get("/profiles/nope")->status == 404);
    }
    SUBCASE("bundle, regenerate, preview, log and export") {
      auto cur = client.Get("/bundle/current");
      REQUIRE(cur);
      CHECK(cur->status == 200);
      CHECK(io::json::parse(cur->body).at("hash") == test::baseline().hash());

      auto reg = client.Post("/bundle/regenerate", R"({"profile": {"params": {"pushoff_pct": 20}}, "note": "t"})",
                             "application/json");
      REQUIRE(reg);
      CHECK(reg->status == 200);
      CHECK(io::json::parse(reg->body).at("regenerated") == io::json::array({"impedance.ankle"}));
      CHECK(client.Post("/bundle/regenerate", R"({"params": {"pushoff_pct": 70}})", "application/json")->status == 400);

      auto prev = client.Get("/preview/torques?task=1.0,0&joint=ankle");
      REQUIRE(prev);
      CHECK(prev->status == 200);
      CHECK(io::json::parse(prev->body).at("target_peak_ratio").get<double>() == doctest::Approx(1.2).epsilon(1e-9));
      CHECK(client.Get("/preview/torques?task=1.0,0")->status == 400);
      CHECK(client.Get("/preview/torques?task=9,0&joint=ankle")->status == 404);

      auto log = client.Get("/session/log");
      REQUIRE(log);
      CHECK(io::json::parse(log->body).size() == 1);

      const std::string target = (dir.path / "out.ptb").string();
      auto ex = client.Post("/bundle/export", io::json{{"path", target}}.dump(), "application/json");
      REQUIRE(ex);
      CHECK(ex->status == 200);
      CHECK(import_bundle(target).hash() == service.current()->hash());
    }
    SUBCASE("presets") {
      auto r = client.Get("/presets/pushoff/HIGH");
      REQUIRE(r);
      CHECK(r->status == 200);
      CHECK(io::json::parse(r->body).at("params").at("pushoff_pct").get<double>() == doctest::Approx(48.0));
      CHECK(client.Get("/presets/flexion/low")->status == 200);
      CHECK(client.Get("/presets/gain/high")->status == 404);
    }
  }
}
