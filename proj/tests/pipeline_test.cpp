#include <gtest/gtest.h>

#include <cmath>
#include <regex>
#include <set>

#include "pbench/core/aggregate.hpp"
#include "pbench/core/serialization.hpp"
#include "pbench/pipeline/report.hpp"
#include "pipeline_fixtures.hpp"

using namespace pbench;
using namespace pbench::pipeline;
using fixture::json;
namespace fs = std::filesystem;

namespace {

std::size_t lines(const fs::path& p) {
  if (!fs::exists(p)) return 0;
  const auto text = fixture::read_file(p);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

std::vector<store::StageEvent> events_of(const fs::path& run_dir, const std::string& stage) {
  return store::RunLog::open(run_dir)->events(stage);
}

std::size_t count_status(const std::vector<store::StageEvent>& events, const std::string& status) {
  return static_cast<std::size_t>(std::count_if(events.begin(), events.end(),
                                                [&](const auto& e) { return e.status == status; }));
}

ModelReport report_of(const fs::path& run_dir) { return build_report(*store::RunLog::open(run_dir)); }

}  // namespace

TEST(Pipeline, EndToEndStageCounts) {
  const auto root = fixture::temp_dir("e2e");
  const auto config = fixture::load(fixture::config_json(root));
  const auto outcome = run_benchmark(config, fixture::options());

  EXPECT_TRUE(outcome.complete);
  // 2 environment selections + 10 question lists + 100 exemplar sets.
  EXPECT_EQ(outcome.calls_by_profile.at("reasoner"), 112u);
  EXPECT_EQ(outcome.calls_by_profile.at("agent"), 100u);
  EXPECT_EQ(outcome.calls_by_profile.at("judge-a") + outcome.calls_by_profile.at("judge-b"), 200u);
  EXPECT_EQ(outcome.provider_calls, 412u);

  const fs::path ev = outcome.run_dir / "events";
  EXPECT_EQ(lines(ev / "environments.jsonl"), 2u);
  EXPECT_EQ(lines(ev / "questions.jsonl"), 10u);
  EXPECT_EQ(lines(ev / "responses.jsonl"), 100u);
  EXPECT_EQ(lines(ev / "exemplars.jsonl"), 100u);
  EXPECT_EQ(lines(ev / "judgements.jsonl"), 200u);
  EXPECT_EQ(lines(ev / "ensembles.jsonl"), 100u);
  EXPECT_FALSE(fs::exists(ev / "errors.jsonl"));

  const auto matrix = score_matrix(*store::RunLog::open(outcome.run_dir));
  ASSERT_EQ(matrix.entries.size(), 2u);
  for (const auto& [persona, tasks] : matrix.entries) {
    ASSERT_EQ(tasks.size(), 5u) << persona;
    for (const auto& [task, scores] : tasks) {
      ASSERT_EQ(scores.size(), 10u);
      for (const auto& s : scores) {
        EXPECT_EQ(s.evaluator_count, 2);
        EXPECT_EQ(s.score_sum, 9);
      }
    }
  }
  EXPECT_EQ(matrix.total(), 100u);
  EXPECT_EQ(store::RunLog::open(outcome.run_dir)->manifest().status, "complete");
}

TEST(Pipeline, JudgesSeeRubricAtTemperatureZeroAndAgentSeesPersonaPrompt) {
  const auto root = fixture::temp_dir("messages");
  const auto config = fixture::load(fixture::config_json(root));
  EXPECT_EQ(config.evaluators[0].params.temperature, 0.0);
  const auto outcome = run_benchmark(config, fixture::options());
  for (const auto& e : events_of(outcome.run_dir, "rubrics")) {
    const auto text = e.payload.at("text").get<std::string>();
    EXPECT_NE(text.find("Therefore, the final score is"), std::string::npos);
    EXPECT_NE(text.find("Score 3: an answer worth 3."), std::string::npos) << "exemplars inlined";
    EXPECT_EQ(text.find("{"), std::string::npos) << "unbound placeholder in " << e.key;
  }
  const auto envs = events_of(outcome.run_dir, "environments");
  EXPECT_EQ(envs[0].payload.at("environments"), json({"Airport Terminal", "Aquarium"}));
}

TEST(Pipeline, RerunProducesByteIdenticalReportAndLog) {
  const auto a = fixture::temp_dir("rerun_a");
  const auto b = fixture::temp_dir("rerun_b");
  const auto ra = run_benchmark(fixture::load(fixture::config_json(a)), fixture::options());
  const auto rb = run_benchmark(fixture::load(fixture::config_json(b)), fixture::options());
  const std::vector<ModelReport> ma = {report_of(ra.run_dir)};
  const std::vector<ModelReport> mb = {report_of(rb.run_dir)};
  EXPECT_EQ(render_text(ma), render_text(mb));
  EXPECT_EQ(render_csv(ma), render_csv(mb));
  for (const char* stage : fixture::kStages) {
    const auto file = std::string(stage) + ".jsonl";
    EXPECT_EQ(fixture::read_file(ra.run_dir / "events" / file), fixture::read_file(rb.run_dir / "events" / file))
        << stage;
  }
  EXPECT_EQ(fixture::read_file(ra.run_dir / "manifest.json"), fixture::read_file(rb.run_dir / "manifest.json"));
}

TEST(Pipeline, LogDoesNotDependOnConcurrency) {
  auto one = fixture::config_json(fixture::temp_dir("conc1"));
  one["concurrency"] = 1;
  auto eight = fixture::config_json(fixture::temp_dir("conc8"));
  eight["concurrency"] = 8;
  const auto r1 = run_benchmark(fixture::load(one), fixture::options());
  const auto r8 = run_benchmark(fixture::load(eight), fixture::options());
  for (const char* stage : fixture::kStages) {
    const auto file = std::string(stage) + ".jsonl";
    EXPECT_EQ(fixture::read_file(r1.run_dir / "events" / file), fixture::read_file(r8.run_dir / "events" / file))
        << stage;
  }
}

TEST(Pipeline, WarmCacheRerunMakesNoProviderCalls) {
  const auto root = fixture::temp_dir("warm");
  auto j = fixture::config_json(root);
  j["cache_dir"] = (root / "cache").string();
  const auto cold = run_benchmark(fixture::load(j), fixture::options());
  EXPECT_EQ(cold.provider_calls, 412u);
  EXPECT_EQ(cold.cache_hits, 0u);

  auto opts = fixture::options();
  opts.overwrite = true;
  const auto warm = run_benchmark(fixture::load(j), opts);
  EXPECT_TRUE(warm.complete);
  EXPECT_EQ(warm.provider_calls, 0u);
  EXPECT_EQ(warm.cache_hits, 412u);
}

TEST(Pipeline, KillAndResumeRecomputesNoCompletedItem) {
  const auto ref_root = fixture::temp_dir("resume_ref");
  const auto reference = run_benchmark(fixture::load(fixture::config_json(ref_root)), fixture::options());

  const auto root = fixture::temp_dir("resume");
  struct Crash {};
  auto crash = fixture::options();
  crash.after_append = [](std::size_t n) {
    if (n == 250) throw Crash{};
  };
  EXPECT_THROW(run_benchmark(fixture::load(fixture::config_json(root)), crash), Crash);

  const fs::path dir = root / "t";
  const auto before = [&] {
    std::map<std::string, std::string> files;
    for (const char* stage : fixture::kStages) {
      files[stage] = fixture::read_file(dir / "events" / (std::string(stage) + ".jsonl"));
    }
    return files;
  }();
  const std::size_t answered = lines(dir / "events" / "responses.jsonl");
  const std::size_t judged = lines(dir / "events" / "judgements.jsonl");
  ASSERT_GT(answered, 0u);
  ASSERT_LT(lines(dir / "events" / "ensembles.jsonl"), 100u);

  auto resume = fixture::options();
  resume.resume = true;
  const auto resumed = run_benchmark(fixture::load(fixture::config_json(root)), resume);
  EXPECT_TRUE(resumed.complete);
  // Only stage outputs missing from the log were requested again.
  EXPECT_EQ(resumed.calls_by_profile.at("agent"), 100u - answered);
  EXPECT_EQ(resumed.calls_by_profile.at("judge-a") + resumed.calls_by_profile.at("judge-b"), 200u - judged);

  for (const char* stage : fixture::kStages) {
    const auto file = std::string(stage) + ".jsonl";
    const auto after = fixture::read_file(dir / "events" / file);
    // Pre-crash lines are untouched and the final log equals an uninterrupted run.
    EXPECT_EQ(after.substr(0, before.at(stage).size()), before.at(stage)) << stage;
    EXPECT_EQ(after, fixture::read_file(reference.run_dir / "events" / file)) << stage;
  }
}

TEST(Pipeline, ResumeWithChangedConfigIsRejected) {
  const auto root = fixture::temp_dir("mismatch");
  auto j = fixture::config_json(root);
  run_benchmark(fixture::load(j), fixture::options());
  j["questions_per_task"] = 9;
  j["reasoner"]["script"] = fixture::reasoner_script(9);
  auto opts = fixture::options();
  opts.resume = true;
  try {
    run_benchmark(fixture::load(j), opts);
    FAIL() << "expected ConfigMismatch";
  } catch (const store::StoreError& e) {
    EXPECT_EQ(e.code(), store::StoreError::Code::ConfigMismatch);
  }
}

TEST(Pipeline, ExistingRunIsNotOverwrittenSilently) {
  const auto root = fixture::temp_dir("exists");
  const auto j = fixture::config_json(root);
  run_benchmark(fixture::load(j), fixture::options());
  try {
    run_benchmark(fixture::load(j), fixture::options());
    FAIL() << "expected RunExists";
  } catch (const store::StoreError& e) {
    EXPECT_EQ(e.code(), store::StoreError::Code::RunExists);
  }
}

TEST(Pipeline, MalformedListIsRetriedWithSuffix) {
  const auto root = fixture::temp_dir("retry");
  auto j = fixture::config_json(root);
  j["persona_ids"] = {"p001"};
  fixture::prepend_rule(j, "reasoner", 0,
                        {{"match", "select the most relevant environments"},
                         {"replies", {"Let me think about that.", "Hospitals, I suppose.", R"(["Aquarium"])"}}});
  const auto outcome = run_benchmark(fixture::load(j), fixture::options());
  EXPECT_TRUE(outcome.complete);
  const auto events = events_of(outcome.run_dir, "environments");
  ASSERT_EQ(events.size(), 3u);
  EXPECT_EQ(events[0].status, "malformed");
  EXPECT_EQ(events[1].status, "malformed");
  EXPECT_EQ(events[2].status, "ok");
  EXPECT_EQ(events[0].payload.at("reason"), "NoListFound");
  EXPECT_EQ(events[2].payload.at("environments"), json({"Aquarium"}));
}

TEST(Pipeline, EnvironmentOutsidePoolAbortsOnlyThatPersona) {
  const auto root = fixture::temp_dir("badenv");
  auto j = fixture::config_json(root);
  // p001's description mentions Italy; only its selection returns an unknown name.
  fixture::prepend_rule(j, "reasoner", 0,
                        {{"match", "from Italy"}, {"reply", R"(["Moon Base"])"}});
  const auto outcome = run_benchmark(fixture::load(j), fixture::options());
  EXPECT_FALSE(outcome.complete);
  const auto envs = events_of(outcome.run_dir, "environments");
  EXPECT_EQ(count_status(envs, "malformed"), 3u);
  EXPECT_EQ(envs[0].payload.at("reason"), "EnvironmentNotInPool");
  const auto errors = events_of(outcome.run_dir, "errors");
  ASSERT_EQ(errors.size(), 1u);
  EXPECT_EQ(errors[0].key, "p001");
  EXPECT_EQ(errors[0].status, "failed");
  EXPECT_EQ(errors[0].payload.at("scope"), "persona");

  const auto report = report_of(outcome.run_dir);
  EXPECT_EQ(report.completed_items, 50);
  EXPECT_EQ(report.expected_items, 100);
  ASSERT_EQ(report.failures.size(), 1u);
  EXPECT_NE(report.failures[0].find("p001"), std::string::npos);
  EXPECT_NE(report.failures[0].find("EnvironmentNotInPool"), std::string::npos);
  ASSERT_TRUE(report.persona_score.has_value());
  EXPECT_EQ(report.persona_score->count, 1u);
}

TEST(Pipeline, WrongQuestionCountFailsTheTask) {
  const auto root = fixture::temp_dir("count");
  auto j = fixture::config_json(root);
  j["persona_ids"] = {"p001"};
  fixture::prepend_rule(j, "reasoner", 0,
                        {{"match", "Evaluation Task: Toxicity Control\n"},
                         {"reply", fixture::question_list(TaskKind::ToxicityControl, 9)}});
  const auto outcome = run_benchmark(fixture::load(j), fixture::options());
  EXPECT_FALSE(outcome.complete);
  const auto errors = events_of(outcome.run_dir, "errors");
  ASSERT_EQ(errors.size(), 1u);
  EXPECT_EQ(errors[0].key, "p001/ToxicityControl");
  EXPECT_EQ(errors[0].payload.at("code"), "WrongCount");
  const auto report = report_of(outcome.run_dir);
  EXPECT_EQ(report.completed_items, 40);
  EXPECT_FALSE(report.personas[0].persona_score.has_value()) << "persona score needs all five tasks";
  EXPECT_FALSE(report.persona_score.has_value());
}

TEST(Pipeline, DuplicateQuestionsCountOnce) {
  const auto root = fixture::temp_dir("dup");
  auto j = fixture::config_json(root);
  j["persona_ids"] = {"p001"};
  std::string list = fixture::question_list(TaskKind::ExpectedAction, 9);
  list.pop_back();
  list += ", " + json(fixture::question_text(TaskKind::ExpectedAction, 9)).dump() + "]";
  fixture::prepend_rule(j, "reasoner", 0, {{"match", "Evaluation Task: Expected Action\n"}, {"reply", list}});
  const auto outcome = run_benchmark(fixture::load(j), fixture::options());
  std::vector<store::StageEvent> questions;
  for (const auto& e : events_of(outcome.run_dir, "questions")) {
    if (e.key == "p001/ExpectedAction") questions.push_back(e);
  }
  ASSERT_EQ(questions.size(), 3u);
  EXPECT_EQ(count_status(questions, "malformed"), 3u);
  EXPECT_EQ(questions[0].payload.at("reason"), "WrongCount");
  EXPECT_NE(questions[0].payload.at("message").get<std::string>().find("got 9"), std::string::npos);
}

TEST(Pipeline, UnevaluableQuestionIsExcludedAndReported) {
  const auto root = fixture::temp_dir("unevaluable");
  auto j = fixture::config_json(root);
  j["persona_ids"] = {"p001"};
  fixture::prepend_rule(j, "evaluators", 1,
                        {{"match", "ExpectedAction Q4:"}, {"reply", "I cannot decide on a number."}});
  const auto outcome = run_benchmark(fixture::load(j), fixture::options());
  EXPECT_FALSE(outcome.complete);

  const auto judgements = events_of(outcome.run_dir, "judgements");
  EXPECT_EQ(count_status(judgements, "malformed"), 3u);
  const auto errors = events_of(outcome.run_dir, "errors");
  ASSERT_EQ(errors.size(), 1u);
  EXPECT_EQ(errors[0].key, "p001/ExpectedAction/3");
  EXPECT_EQ(errors[0].payload.at("stage"), "judgements");
  EXPECT_EQ(errors[0].payload.at("reason"), "NoScoreSentence");

  const auto report = report_of(outcome.run_dir);
  EXPECT_EQ(report.personas[0].tasks.at(TaskKind::ExpectedAction).count, 9u);
  EXPECT_EQ(report.personas[0].completed_items, 49);
  EXPECT_EQ(report.personas[0].expected_items, 50);
  const std::vector<ModelReport> models = {report};
  EXPECT_NE(render_text(models).find("49/50"), std::string::npos);
  EXPECT_EQ(store::RunLog::open(outcome.run_dir)->manifest().status, "partial");
}

TEST(Pipeline, EmptyAgentResponseIsATerminalItemError) {
  const auto root = fixture::temp_dir("empty");
  auto j = fixture::config_json(root);
  j["persona_ids"] = {"p001"};
  fixture::prepend_rule(j, "agent", 0, {{"match", "LinguisticHabits Q2:"}, {"reply", "  \n"}});
  const auto outcome = run_benchmark(fixture::load(j), fixture::options());
  const auto errors = events_of(outcome.run_dir, "errors");
  ASSERT_EQ(errors.size(), 1u);
  EXPECT_EQ(errors[0].key, "p001/LinguisticHabits/1");
  EXPECT_EQ(errors[0].payload.at("code"), "EmptyResponse");
  EXPECT_EQ(errors[0].status, "failed");

  // A resume does not retry terminal failures.
  auto opts = fixture::options();
  opts.resume = true;
  const auto again = run_benchmark(fixture::load(j), opts);
  EXPECT_EQ(again.provider_calls, 0u);
  EXPECT_FALSE(again.complete);
}

TEST(Pipeline, RefusalsAreCounted) {
  const auto root = fixture::temp_dir("refusals");
  auto j = fixture::config_json(root);
  for (int k : {1, 5, 8}) {
    fixture::prepend_rule(j, "agent", 0,
                          {{"match", "PersonaConsistency Q" + std::to_string(k) + ":"},
                           {"reply", "As an AI language model, I cannot pretend to be this person."}});
  }
  j["persona_ids"] = {"p001"};
  const auto outcome = run_benchmark(fixture::load(j), fixture::options());
  const auto report = report_of(outcome.run_dir);
  EXPECT_EQ(report.refusals, 3);
  const std::vector<ModelReport> models = {report};
  const auto text = render_text(models);
  const auto refusal_block = text.substr(text.find("Refusals"));
  EXPECT_NE(refusal_block.find("agent  3"), std::string::npos) << text;
}

TEST(Pipeline, TransientProviderErrorsAreRetriedOnResume) {
  const auto root = fixture::temp_dir("transient");
  auto j = fixture::config_json(root);
  j["persona_ids"] = {"p001"};
  const json down = {{"error", "Transport"}};
  // The provider fails three times (one full retry budget), then recovers.
  fixture::prepend_rule(j, "agent", 0,
                        {{"match", "ExpectedAction Q7:"}, {"replies", {down, down, down, "A fine answer."}}});
  const auto config = fixture::load(j);
  const auto first = run_benchmark(config, fixture::options());
  EXPECT_FALSE(first.complete);
  const auto errors = events_of(first.run_dir, "errors");
  ASSERT_EQ(errors.size(), 1u);
  EXPECT_EQ(errors[0].status, "transient");
  EXPECT_EQ(errors[0].payload.at("code"), "GatewayError");
  EXPECT_EQ(first.calls_by_profile.at("agent"), 49u + 3u);
  EXPECT_EQ(report_of(first.run_dir).failures.size(), 1u);

  auto opts = fixture::options();
  opts.resume = true;
  const auto second = run_benchmark(config, opts);
  EXPECT_TRUE(second.complete);
  EXPECT_EQ(second.calls_by_profile.at("agent"), 1u) << "only the pending item is retried";
  EXPECT_TRUE(report_of(second.run_dir).failures.empty());
}

TEST(Pipeline, RejectedCredentialIsFatalAndNamesProvider) {
  const auto root = fixture::temp_dir("auth");
  auto j = fixture::config_json(root);
  fixture::prepend_rule(j, "evaluators", 0, {{"match", "Evaluation Form:"}, {"reply", {{"error", "Auth"}}}});
  try {
    run_benchmark(fixture::load(j), fixture::options());
    FAIL() << "expected FatalRunError";
  } catch (const FatalRunError& e) {
    EXPECT_EQ(e.provider(), "judge-a");
    EXPECT_NE(std::string(e.what()).find("judge-a"), std::string::npos);
  }
}

TEST(Pipeline, MissingApiKeyIsAConfigError) {
  const auto root = fixture::temp_dir("apikey");
  auto j = fixture::config_json(root);
  j["agent"] = {{"name", "remote"},
                {"endpoint", "http://127.0.0.1:9/v1"},
                {"model", "remote-model"},
                {"api_key_env", "PBENCH_TEST_UNSET_KEY"}};
  ::unsetenv("PBENCH_TEST_UNSET_KEY");
  try {
    run_benchmark(fixture::load(j), fixture::options());
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.subject(), "remote");
    EXPECT_NE(std::string(e.what()).find("PBENCH_TEST_UNSET_KEY"), std::string::npos);
  }
}

TEST(Config, EvaluatorWithAgentModelIsRejected) {
  auto j = fixture::config_json(fixture::temp_dir("circular"));
  j["evaluators"][1]["model"] = "mock-agent";
  try {
    fixture::load(j);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("judge its own"), std::string::npos) << e.what();
  }
}

TEST(Config, RejectsBadValues) {
  const auto root = fixture::temp_dir("badcfg");
  auto expect_error = [&](const std::function<void(json&)>& edit) {
    auto j = fixture::config_json(root);
    edit(j);
    EXPECT_THROW(fixture::load(j), ConfigError) << j.dump().substr(0, 200);
  };
  expect_error([](json& j) { j["unknown_key"] = 1; });
  expect_error([](json& j) { j["evaluators"][0]["temperature"] = 0.7; });
  expect_error([](json& j) { j["evaluators"][1]["name"] = "judge-a"; });
  expect_error([](json& j) { j["evaluators"] = json::array(); });
  expect_error([](json& j) { j["persona_ids"] = {"p001", "p001"}; });
  expect_error([](json& j) { j["persona_ids"] = {"nobody"}; });
  expect_error([](json& j) { j["concurrency"] = 0; });
  expect_error([](json& j) { j["questions_per_task"] = 0; });
  expect_error([](json& j) { j["run_id"] = ""; });
  expect_error([](json& j) { j["agent"]["endpoint"] = "ftp://x"; });
  expect_error([](json& j) { j["agent"]["script"] = json::array({{{"match", "x"}}}); });
  expect_error([](json& j) { j["tasks_dir"] = "/nonexistent"; });
  expect_error([](json& j) { j.erase("agent"); });
}

TEST(Config, DigestIgnoresLocationsButNotScripts) {
  const auto a = fixture::config_json(fixture::temp_dir("digest_a"));
  auto b = fixture::config_json(fixture::temp_dir("digest_b"));
  b["concurrency"] = 1;
  EXPECT_EQ(config_digest(fixture::load(a)), config_digest(fixture::load(b)));
  b["evaluators"][0]["script"] = fixture::judge_script(3);
  EXPECT_NE(config_digest(fixture::load(a)), config_digest(fixture::load(b)));
}

TEST(Config, ShippedMockConfigsLoad) {
  const auto config = load_config(fixture::assets() / "configs" / "mock_benchmark.json");
  EXPECT_EQ(config.personas.size(), 2u);
  EXPECT_EQ(config.evaluators.size(), 2u);
  EXPECT_EQ(config.reasoner.params.temperature, 0.9);
  EXPECT_EQ(config.agent.params.temperature, 1.0);
  const auto grid = load_grid_config(fixture::assets() / "configs" / "mock_grid.json");
  EXPECT_EQ(grid.generators.size(), 3u);
  EXPECT_EQ(grid.evaluators.size(), 4u);
  EXPECT_EQ(grid_cell(grid, 1, 2).run_id, "mock-grid-gen-2-eval-3");
  ASSERT_EQ(grid_cell(grid, 1, 2).evaluators.size(), 1u);
  EXPECT_NO_THROW(load_config(fixture::assets() / "configs" / "openai_example.json"));
}

TEST(Grid, ConstantMockGivesEqualCellsAndZeroSpread) {
  const auto root = fixture::temp_dir("grid");
  auto j = fixture::config_json(root, "g");
  j.erase("reasoner");
  j["generators"] = {fixture::profile("gen-1", "gen-model-1", fixture::reasoner_script()),
                     fixture::profile("gen-2", "gen-model-2", fixture::reasoner_script()),
                     fixture::profile("gen-3", "gen-model-3", fixture::reasoner_script())};
  j["evaluators"] = {fixture::profile("eval-1", "eval-model-1", fixture::judge_script(3)),
                     fixture::profile("eval-2", "eval-model-2", fixture::judge_script(3)),
                     fixture::profile("eval-3", "eval-model-3", fixture::judge_script(3)),
                     fixture::profile("eval-4", "eval-model-4", fixture::judge_script(3))};
  const auto grid = grid_from_json(j, fixture::assets() / "configs");
  const auto result = run_grid(grid, fixture::options());
  ASSERT_EQ(result.cells.size(), 12u);
  for (const auto& c : result.cells) {
    ASSERT_TRUE(c.persona_score.has_value());
    EXPECT_EQ(*c.persona_score, 3.0);
    EXPECT_TRUE(c.complete);
    EXPECT_TRUE(fs::exists(root / c.run_id / "manifest.json"));
  }
  ASSERT_TRUE(result.spread.has_value());
  EXPECT_EQ(*result.spread, 0.0);
  EXPECT_NE(render_grid(result).find("spread (max - min): 0.00"), std::string::npos);
}

TEST(Grid, EvaluatorEqualToAgentIsRejected) {
  auto j = fixture::config_json(fixture::temp_dir("grid_bad"), "g");
  j.erase("reasoner");
  j["generators"] = {fixture::profile("gen-1", "gen-model-1", fixture::reasoner_script())};
  j["evaluators"] = {fixture::profile("eval-1", "mock-agent", fixture::judge_script(3))};
  EXPECT_THROW(grid_from_json(j, fixture::assets() / "configs"), ConfigError);
}

TEST(Parallel, RunsEveryIndexAndRethrows) {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(100, 4, [&](std::size_t i) { ++hits[i]; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 4) throw std::runtime_error("boom");
                            }),
               std::runtime_error);
}
