#include <gtest/gtest.h>

#include <httplib.h>

#include <cstdlib>
#include <random>
#include <regex>
#include <sstream>
#include <thread>

#include "pbench/cli/annotation_service.hpp"
#include "pbench/cli/commands.hpp"
#include "pbench/core/serialization.hpp"
#include "pbench/pipeline/report.hpp"
#include "pipeline_fixtures.hpp"

using namespace pbench;
using namespace pbench::cli;
using fixture::json;
namespace fs = std::filesystem;

namespace {

struct Captured {
  std::ostringstream out, err;
  Streams io() { return {out, err}; }
};

fs::path write_config(const fs::path& dir, const json& j, const std::string& name = "config.json") {
  const fs::path p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

// A complete two-persona run whose judges vary by persona and question.
fs::path varied_run(const fs::path& root) {
  auto j = fixture::config_json(root, "varied");
  j["evaluators"][0]["script"] = fixture::persona_varied_judge_script();
  j["evaluators"][1]["script"] = fixture::persona_varied_judge_script();
  const auto outcome = pipeline::run_benchmark(fixture::load(j), fixture::options());
  EXPECT_TRUE(outcome.complete);
  return outcome.run_dir;
}

// item id -> machine ensemble value
std::map<std::string, double> machine_scores(const fs::path& run_dir) {
  auto log = store::RunLog::open(run_dir);
  std::map<std::string, double> out;
  for (const auto& [key, payload] : store::ok_payloads(*log, store::stage::kEnsembles)) {
    out[store::item_id(log->manifest().run_id, key)] = payload.get<EnsembleScore>().value();
  }
  return out;
}

bool contains_key(const json& j, const std::set<std::string>& keys) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      if (keys.contains(k) || contains_key(v, keys)) return true;
    }
  } else if (j.is_array()) {
    for (const auto& v : j) {
      if (contains_key(v, keys)) return true;
    }
  }
  return false;
}

class LiveService {
 public:
  explicit LiveService(AnnotationService& service) {
    service.mount(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LiveService() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::string score_body(const std::string& annotator, const std::string& item, int score) {
  return json{{"annotator_id", annotator}, {"item_id", item}, {"score", score}}.dump();
}

}  // namespace

TEST(CmdRun, MockConfigPrintsSixNumericColumns) {
  const auto root = fixture::temp_dir("cmd_run");
  const auto path = write_config(root, fixture::config_json(root));
  Captured c;
  EXPECT_EQ(cmd_run(path, {.quiet = true}, c.io()), kOk) << c.err.str();
  const auto text = c.out.str();
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::getline(in, line);  // the model row
  static const std::regex cell(R"(\d\.\d\d \(\d\.\d\d\)\*?)");
  const auto n = std::distance(std::sregex_iterator(line.begin(), line.end(), cell), std::sregex_iterator());
  EXPECT_EQ(n, 6) << text;
  EXPECT_NE(text.find("run t: complete"), std::string::npos);
}

TEST(CmdRun, ShippedMockConfigRunsFromAnyDirectory) {
  const auto root = fixture::temp_dir("cmd_shipped");
  auto j = json::parse(fixture::read_file(fixture::assets() / "configs" / "mock_benchmark.json"));
  j["runs_root"] = (root / "runs").string();
  j["cache_dir"] = (root / "cache").string();
  // Relative asset paths resolve against the config's own directory.
  const auto path = fixture::assets() / "configs" / "mock_benchmark.json";
  const auto config = pipeline::config_from_json(j, path.parent_path());
  const auto outcome = pipeline::run_benchmark(config, fixture::options());
  EXPECT_TRUE(outcome.complete);
  EXPECT_EQ(outcome.provider_calls, 412u);
}

TEST(CmdRun, BadCredentialExitsTwoNamingProvider) {
  const auto root = fixture::temp_dir("cmd_auth");
  auto j = fixture::config_json(root);
  fixture::prepend_rule(j, "agent", 0, {{"regex", "."}, {"reply", {{"error", "Auth"}}}});
  Captured c;
  EXPECT_EQ(cmd_run(write_config(root, j), {.quiet = true}, c.io()), kConfigError);
  EXPECT_NE(c.err.str().find("agent"), std::string::npos) << c.err.str();
}

TEST(CmdRun, PartialRunExitsThree) {
  const auto root = fixture::temp_dir("cmd_partial");
  auto j = fixture::config_json(root);
  fixture::prepend_rule(j, "agent", 0, {{"match", "ExpectedAction Q1:"}, {"reply", ""}});
  Captured c;
  EXPECT_EQ(cmd_run(write_config(root, j), {.quiet = true}, c.io()), kPartial);
  EXPECT_NE(c.out.str().find("98/100"), std::string::npos) << c.out.str();
  EXPECT_NE(c.out.str().find("EmptyResponse"), std::string::npos);
}

TEST(CmdRun, ResumeExecutesOnlyRemainingItems) {
  const auto root = fixture::temp_dir("cmd_resume");
  const auto path = write_config(root, fixture::config_json(root));
  struct Crash : std::runtime_error {
    Crash() : std::runtime_error("simulated crash") {}
  };
  auto crash = fixture::options();
  crash.after_append = [](std::size_t n) {
    if (n == 300) throw Crash();
  };
  Captured first;
  EXPECT_EQ(cmd_run(path, {.quiet = true}, first.io(), crash), kFailure);
  EXPECT_NE(first.err.str().find("simulated crash"), std::string::npos);

  Captured again;
  EXPECT_EQ(cmd_run(path, {.quiet = true}, again.io()), kConfigError) << "refuses to clobber";

  Captured second;
  EXPECT_EQ(cmd_run(path, {.resume = true, .quiet = true}, second.io()), kOk) << second.err.str();
  std::smatch m;
  const auto text = second.out.str();
  ASSERT_TRUE(std::regex_search(text, m, std::regex(R"(complete \((\d+) provider calls)"))) << text;
  EXPECT_LT(std::stoi(m[1]), 412);
  EXPECT_GT(std::stoi(m[1]), 0);
}

TEST(CmdRun, MissingConfigFileExitsTwo) {
  Captured c;
  EXPECT_EQ(cmd_run("/nonexistent/config.json", {}, c.io()), kConfigError);
}

TEST(CmdReport, EmptyRunExitsFour) {
  const auto root = fixture::temp_dir("cmd_empty");
  store::RunLog::create(root / "r", "r", "d")->finalize("partial");
  Captured c;
  EXPECT_EQ(cmd_report({root / "r"}, false, c.io()), kEmptyRun);
  EXPECT_NE(c.err.str().find("EmptyRun"), std::string::npos);
}

TEST(CmdReport, RendersTextAndCsvForSeveralRuns) {
  const auto root = fixture::temp_dir("cmd_report");
  auto a = fixture::config_json(root, "a");
  auto b = fixture::config_json(root, "b");
  b["agent"]["name"] = "agent-b";
  b["agent"]["model"] = "mock-agent-b";
  b["evaluators"][1]["script"] = fixture::judge_script(3);
  pipeline::run_benchmark(fixture::load(a), fixture::options());
  pipeline::run_benchmark(fixture::load(b), fixture::options());
  Captured text, csv;
  EXPECT_EQ(cmd_report({root / "a", root / "b"}, false, text.io()), kOk);
  EXPECT_NE(text.out.str().find("agent    4.50 (0.00)*"), std::string::npos) << text.out.str();
  EXPECT_NE(text.out.str().find("agent-b  3.50 (0.00) "), std::string::npos);
  EXPECT_EQ(cmd_report({root / "a", root / "b"}, true, csv.io()), kOk);
  EXPECT_NE(csv.out.str().find("agent-b,b,3.50,0.00"), std::string::npos) << csv.out.str();
}

TEST(Export, PacketIsBlindAndSampledBySeed) {
  const auto root = fixture::temp_dir("export");
  const auto run = varied_run(root);
  Captured c;
  ASSERT_EQ(cmd_export(run, {.sample = 1, .seed = 11, .tasks = {TaskKind::ExpectedAction}}, c.io()), kOk)
      << c.err.str();
  const auto text = fixture::read_file(run / "annotations" / "packet-11.json");
  const auto packet = json::parse(text);
  EXPECT_EQ(packet.at("items").size(), 10u);
  EXPECT_FALSE(contains_key(packet, {"score", "score_sum", "value", "evaluator_id", "raw_justification"}));
  EXPECT_TRUE(fs::exists(run / "annotations" / "packet-11.csv"));

  Captured again;
  ASSERT_EQ(cmd_export(run, {.sample = 1, .seed = 11, .tasks = {TaskKind::ExpectedAction}}, again.io()), kOk);
  EXPECT_EQ(fixture::read_file(run / "annotations" / "packet-11.json"), text);
}

TEST(Service, TwentyItemRoundTripOverHttp) {
  const auto root = fixture::temp_dir("service");
  const auto run = varied_run(root);
  Captured c;
  ASSERT_EQ(cmd_export(run, {.seed = 3, .tasks = {TaskKind::ToxicityControl}}, c.io()), kOk) << c.err.str();

  AnnotationService service(run);
  LiveService live(service);
  auto client = live.client();

  auto packet = client.Get("/api/packet");
  ASSERT_TRUE(packet);
  ASSERT_EQ(packet->status, 200);
  const auto body = json::parse(packet->body);
  ASSERT_EQ(body.at("items").size(), 20u);
  EXPECT_FALSE(contains_key(body, {"score", "score_sum", "value", "evaluator_id", "run_id"}));
  EXPECT_EQ(packet->body.find("varied"), std::string::npos) << "run id leaks the model";

  // Scripted session: score every item, with a revisit and an accidental double click.
  std::mt19937 rng(5);
  std::map<std::string, int> clicks;
  for (const auto& item : body["items"]) {
    const std::string id = item.at("item_id");
    const int score = static_cast<int>(rng() % 5) + 1;
    auto r = client.Post("/api/score", score_body("ann-1", id, score), "application/json");
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 200) << r->body;
    EXPECT_EQ(json::parse(r->body).at("status"), "recorded");
    clicks[id] = score;
  }
  const std::string first = body["items"][0].at("item_id");
  auto dup = client.Post("/api/score", score_body("ann-1", first, clicks[first]), "application/json");
  EXPECT_EQ(dup->status, 200);
  EXPECT_EQ(json::parse(dup->body).at("status"), "unchanged");
  const int changed = clicks[first] % 5 + 1;
  auto conflict = client.Post("/api/score", score_body("ann-1", first, changed), "application/json");
  EXPECT_EQ(conflict->status, 409);
  auto overwrite = client.Post("/api/score?overwrite=true", score_body("ann-1", first, changed), "application/json");
  EXPECT_EQ(overwrite->status, 200);
  EXPECT_EQ(json::parse(overwrite->body).at("status"), "overwritten");
  clicks[first] = changed;

  auto progress = client.Get("/api/progress/ann-1");
  EXPECT_EQ(json::parse(progress->body).at("scored"), 20);
  EXPECT_EQ(json::parse(client.Get("/api/progress/ann-2")->body).at("scored"), 0);

  auto exported = client.Get("/api/export");
  ASSERT_EQ(exported->status, 200);
  const auto sets = json::parse(exported->body).at("sets");
  ASSERT_EQ(sets.size(), 1u);
  const auto set = store::HumanScoreSet::from_json(sets[0]);
  EXPECT_EQ(set.annotator_id, "ann-1");
  EXPECT_EQ(set.scores, clicks);
  // The same set is on disk for cmd_correlate.
  EXPECT_EQ(store::load_score_sets(run / "annotations").at(0).scores, clicks);
}

TEST(Service, RejectsBadRequests) {
  const auto root = fixture::temp_dir("service_bad");
  const auto run = varied_run(root);
  Captured c;
  ASSERT_EQ(cmd_export(run, {.sample = 1, .seed = 1, .tasks = {TaskKind::ExpectedAction}}, c.io()), kOk);
  AnnotationService service(run);
  const auto item = service.loaded_packet().items.at(0).item_id;

  EXPECT_EQ(service.score(score_body("a", item, 0)).status, 400);
  EXPECT_EQ(service.score(score_body("a", item, 6)).status, 400);
  EXPECT_EQ(service.score("not json").status, 400);
  EXPECT_EQ(service.score(json{{"annotator_id", "a"}, {"item_id", item}, {"score", 3.5}}.dump()).status, 400);
  EXPECT_EQ(service.score(json{{"annotator_id", "a"}, {"item_id", item}, {"score", "4"}}.dump()).status, 400);
  EXPECT_EQ(service.score(score_body("../etc", item, 3)).status, 400);
  EXPECT_EQ(service.score(score_body("a", "000000000000", 3)).status, 404);
  EXPECT_EQ(service.progress("bad/id").status, 400);
  EXPECT_EQ(service.score(score_body("a", item, 3)).status, 200);
  EXPECT_EQ(service.score(score_body("a", item, 4)).status, 409);
  auto body = json{{"annotator_id", "a"}, {"item_id", item}, {"score", 4}, {"overwrite", true}};
  EXPECT_EQ(service.score(body.dump()).status, 200);

  // Scores survive a restart.
  AnnotationService restarted(run);
  EXPECT_EQ(restarted.progress("a").body.at("scores").at(item), 4);
}

TEST(Service, ConcurrentAnnotatorsDoNotLoseWrites) {
  const auto root = fixture::temp_dir("service_conc");
  const auto run = varied_run(root);
  Captured c;
  ASSERT_EQ(cmd_export(run, {.sample = 1, .seed = 2, .tasks = {TaskKind::ExpectedAction}}, c.io()), kOk);
  AnnotationService service(run);
  std::vector<std::thread> threads;
  for (int a = 0; a < 4; ++a) {
    threads.emplace_back([&, a] {
      for (const auto& item : service.loaded_packet().items) {
        service.score(score_body("ann-" + std::to_string(a), item.item_id, a + 1));
      }
    });
  }
  for (auto& t : threads) t.join();
  const auto sets = store::load_score_sets(run / "annotations");
  ASSERT_EQ(sets.size(), 4u);
  for (const auto& s : sets) EXPECT_EQ(s.scores.size(), 10u);
}

TEST(Correlate, HumanEqualsMachineGivesPerfectCellsAndKappaOne) {
  const auto root = fixture::temp_dir("correlate");
  const auto run = varied_run(root);
  Captured c;
  ASSERT_EQ(cmd_export(run, {.seed = 9}, c.io()), kOk) << c.err.str();
  AnnotationService service(run);
  ASSERT_EQ(service.loaded_packet().items.size(), 100u);
  const auto machine = machine_scores(run);
  for (const char* annotator : {"ann-1", "ann-2", "ann-3"}) {
    for (const auto& item : service.loaded_packet().items) {
      const double m = machine.at(item.item_id);
      ASSERT_EQ(m, std::floor(m));
      ASSERT_EQ(service.score(score_body(annotator, item.item_id, static_cast<int>(m))).status, 200);
    }
  }

  for (auto mode : {CorrelationMode::Pooled, CorrelationMode::PerPersona}) {
    Captured out;
    ASSERT_EQ(cmd_correlate({run}, std::nullopt, mode, out.io()), kOk) << out.err.str();
    const auto text = out.out.str();
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    std::getline(in, line);  // model row
    static const std::regex cell(R"(100\.0% / 100\.0%)");
    EXPECT_EQ(std::distance(std::sregex_iterator(line.begin(), line.end(), cell), std::sregex_iterator()), 6)
        << text;
    EXPECT_NE(text.find("Fleiss' kappa agent: 1.00 (3 annotators, 100 items)"), std::string::npos) << text;
    EXPECT_NE(text.find("tau-b"), std::string::npos);
  }

  const auto row = correlate_run(*store::RunLog::open(run), store::load_score_sets(run / "annotations"),
                                 CorrelationMode::Pooled);
  ASSERT_TRUE(row.kappa.has_value());
  EXPECT_EQ(row.kappa->numerator, row.kappa->denominator);
  EXPECT_EQ(row.tasks.at(TaskKind::ExpectedAction).items, 20u);
  EXPECT_EQ(row.persona_score.items, 2u);
}

TEST(Correlate, MissingAnnotationsExitFive) {
  const auto root = fixture::temp_dir("correlate_none");
  const auto run = varied_run(root);
  Captured c;
  EXPECT_EQ(cmd_correlate({run}, std::nullopt, CorrelationMode::Pooled, c.io()), kNoAnnotations);
  EXPECT_NE(c.err.str().find("NoAnnotations"), std::string::npos) << c.err.str();
  Captured d;
  EXPECT_EQ(cmd_correlate({run}, root / "nowhere", CorrelationMode::Pooled, d.io()), kNoAnnotations);
}

TEST(Correlate, ConstantScoresAreReportedUndefined) {
  const auto root = fixture::temp_dir("correlate_const");
  const auto outcome = pipeline::run_benchmark(fixture::load(fixture::config_json(root)), fixture::options());
  Captured c;
  ASSERT_EQ(cmd_export(outcome.run_dir, {.seed = 1, .tasks = {TaskKind::ExpectedAction}}, c.io()), kOk);
  AnnotationService service(outcome.run_dir);
  int k = 0;
  for (const auto& item : service.loaded_packet().items) service.score(score_body("a", item.item_id, k++ % 5 + 1));
  Captured out;
  ASSERT_EQ(cmd_correlate({outcome.run_dir}, std::nullopt, CorrelationMode::Pooled, out.io()), kOk);
  EXPECT_NE(out.out.str().find("undefined"), std::string::npos);
  EXPECT_EQ(out.out.str().find("0.0% / 0.0%"), std::string::npos) << "never silently zero";
  EXPECT_NE(out.out.str().find("n/a (needs at least two annotators)"), std::string::npos);
}

TEST(CmdGrid, ShippedMockGridHasZeroSpread) {
  const auto root = fixture::temp_dir("cmd_grid");
  auto j = json::parse(fixture::read_file(fixture::assets() / "configs" / "mock_grid.json"));
  j["runs_root"] = (root / "runs").string();
  const auto grid = pipeline::grid_from_json(j, fixture::assets() / "configs");
  const auto result = pipeline::run_grid(grid, fixture::options());
  EXPECT_EQ(result.cells.size(), 12u);
  ASSERT_TRUE(result.spread.has_value());
  EXPECT_EQ(*result.spread, 0.0);
}

TEST(CmdCache, RepairReportsRemovedEntries) {
  const auto root = fixture::temp_dir("cmd_cache");
  fs::create_directories(root / "ab");
  std::ofstream(root / "ab" / "junk.json.tmp") << "{";
  Captured c;
  EXPECT_EQ(cmd_cache_repair(root, c.io()), kOk);
  EXPECT_NE(c.out.str().find("1 entry removed"), std::string::npos) << c.out.str();
  EXPECT_FALSE(fs::exists(root / "ab" / "junk.json.tmp"));
}

TEST(CmdCheck, ShippedTaskDataIsClean) {
  Captured c;
  EXPECT_EQ(cmd_check(fixture::assets() / "configs" / "mock_benchmark.json", c.io()), kOk) << c.out.str();
  EXPECT_NE(c.out.str().find("0 task-data problem(s)"), std::string::npos);
}

TEST(Binary, HelpListsEveryCommandAndUnknownFlagsFail) {
  const std::string bin = PBENCH_BINARY;
  const auto out = fixture::temp_dir("binary") / "help.txt";
  ASSERT_EQ(std::system((bin + " --help > " + out.string()).c_str()), 0);
  const auto help = fixture::read_file(out);
  for (const char* cmd : {"run", "report", "correlate", "grid", "export-annotations", "serve", "cache", "check"}) {
    EXPECT_NE(help.find(cmd), std::string::npos) << cmd;
  }
  EXPECT_NE(std::system((bin + " run --config x --bogus > /dev/null 2>&1").c_str()), 0);
  EXPECT_NE(std::system((bin + " report > /dev/null 2>&1").c_str()), 0);
}
