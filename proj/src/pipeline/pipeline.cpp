#include "pbench/pipeline/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "pbench/core/aggregate.hpp"
#include "pbench/core/serialization.hpp"

namespace pbench::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using gateway::ChatRequest;
using gateway::GatewayError;
using gateway::ProviderProfile;
using store::StageEvent;
namespace stage = store::stage;
namespace status = store::status;

std::string_view to_string(StageError::Code code) {
  switch (code) {
    case StageError::Code::EnvironmentNotInPool: return "EnvironmentNotInPool";
    case StageError::Code::WrongCount: return "WrongCount";
    case StageError::Code::Parse: return "ParseFailure";
    case StageError::Code::EmptyResponse: return "EmptyResponse";
    case StageError::Code::Gateway: return "GatewayError";
  }
  return "Unknown";
}

namespace {

StageEvent make_event(const std::string& stage_name, const std::string& key, json payload,
                      const std::string& st = status::kOk) {
  StageEvent e;
  e.stage = stage_name;
  e.key = key;
  e.status = st;
  e.payload = std::move(payload);
  return e;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string task_key(const std::string& persona_id, TaskKind task) {
  return persona_id + "/" + std::string(to_string(task));
}

std::string judgement_key(const std::string& question_id, const std::string& evaluator) {
  return question_id + "#" + evaluator;
}

// Keyed by the unit (persona, persona/task or item) rather than the call that
// failed, so resume can tell which units are terminal.
StageEvent failure_event(const StageError& e, const std::string& key, const std::string& scope,
                         const std::string& stage_name) {
  json payload = {{"scope", scope},
                  {"stage", stage_name},
                  {"code", std::string(to_string(e.code()))},
                  {"message", e.what()}};
  if (e.reason()) payload["reason"] = std::string(parsing::to_string(*e.reason()));
  if (e.key() != key) payload["call"] = e.key();
  return make_event(stage::kErrors, key, payload, e.transient() ? status::kTransient : status::kFailed);
}

}  // namespace

// ---------------------------------------------------------------- stages

Stages::Stages(const BenchmarkConfig& config, gateway::Gateway& gateway, gateway::ResponseCache* cache)
    : config_(config), gateway_(gateway), cache_(cache) {}

gateway::ChatResponse Stages::call(const ChatRequest& request, const ProviderProfile& profile,
                                   const std::string& key) {
  try {
    return cache_ ? gateway_.complete_cached(request, profile, *cache_)
                  : gateway_.complete(request, profile);
  } catch (const GatewayError& e) {
    using K = GatewayError::Kind;
    if (e.kind() == K::Auth || e.kind() == K::Config) {
      throw FatalRunError(profile.name, "provider '" + profile.name + "': " + e.what());
    }
    if (e.kind() == K::CacheCorrupt) {
      throw FatalRunError("cache", std::string(e.what()) + " (run `pbench cache repair`)");
    }
    throw StageError(StageError::Code::Gateway, key,
                     "provider '" + profile.name + "' " + std::string(gateway::to_string(e.kind())) +
                         " after " + std::to_string(e.attempts()) + " attempt(s): " + e.what(),
                     true);
  }
}

template <typename T>
T Stages::with_parse_retries(const char* stage_name, const std::string& key, const ChatRequest& request,
                             const ProviderProfile& profile,
                             const std::function<T(const std::string&)>& parse, EventSink& events) {
  std::optional<StageError> last;
  for (int attempt = 0; attempt <= config_.parse_retries; ++attempt) {
    ChatRequest r = request;
    if (attempt > 0) r.user_message += "\n\n" + std::string(parsing::kMalformedRetrySuffix);
    const auto response = call(r, profile, key);
    json detail = {{"attempt", attempt + 1}, {"excerpt", parsing::excerpt(response.text)}};
    try {
      return parse(response.text);
    } catch (const parsing::ParseError& e) {
      last.emplace(StageError::Code::Parse, key, e.what(), false, e.reason());
      detail["reason"] = std::string(parsing::to_string(e.reason()));
    } catch (const StageError& e) {
      if (e.transient()) throw;
      last = e;
      detail["reason"] = std::string(to_string(e.code()));
    }
    detail["message"] = last->what();
    events.push_back(make_event(stage_name, key, detail, status::kMalformed));
  }
  throw *last;
}

SelectedEnvironments Stages::select_environments(const Persona& persona, EventSink& events) {
  if (config_.pool.empty()) {
    throw StageError(StageError::Code::EnvironmentNotInPool, persona.id, "environment pool is empty");
  }
  ChatRequest request;
  request.user_message = config_.prompts.environment_selection(persona.description, config_.pool);
  std::function<SelectedEnvironments(const std::string&)> parse = [&](const std::string& text) {
    SelectedEnvironments selected{persona.id, {}};
    for (const auto& name : parsing::parse_string_list(text, "environments")) {
      auto canonical = config_.pool.find(name);
      if (!canonical) {
        throw StageError(StageError::Code::EnvironmentNotInPool, persona.id,
                         "'" + name + "' is not in the environment pool");
      }
      if (std::find(selected.names.begin(), selected.names.end(), *canonical) == selected.names.end()) {
        selected.names.push_back(*canonical);
      }
    }
    return selected;
  };
  auto selected = with_parse_retries(stage::kEnvironments, persona.id, request, config_.reasoner,
                                     parse, events);
  events.push_back(make_event(stage::kEnvironments, persona.id,
                              {{"persona", persona.description}, {"environments", selected.names}}));
  return selected;
}

std::vector<Question> Stages::generate_questions(const Persona& persona, const SelectedEnvironments& envs,
                                                 TaskKind task, EventSink& events) {
  const std::string key = task_key(persona.id, task);
  ChatRequest request;
  request.user_message =
      config_.prompts.question_generation(persona.description, envs.names, config_.task(task));
  std::function<std::vector<Question>(const std::string&)> parse = [&](const std::string& text) {
    std::vector<std::string> texts;
    for (const auto& raw : parsing::parse_string_list(text, "questions")) {
      std::string q = trim(raw);
      if (!q.empty() && std::find(texts.begin(), texts.end(), q) == texts.end()) {
        texts.push_back(std::move(q));
      }
    }
    const int n = static_cast<int>(texts.size());
    if (n != config_.questions_per_task) {
      throw StageError(StageError::Code::WrongCount, key,
                       "expected " + std::to_string(config_.questions_per_task) +
                           " distinct questions, got " + std::to_string(n),
                       false, parsing::Reason::WrongCount);
    }
    std::vector<Question> out;
    for (int i = 0; i < n; ++i) {
      const ItemKey item{persona.id, task, i};
      out.push_back(Question{item.str(), persona.id, task, i, texts[static_cast<std::size_t>(i)], envs.names});
    }
    return out;
  };
  auto questions = with_parse_retries(stage::kQuestions, key, request, config_.reasoner, parse, events);
  events.push_back(make_event(stage::kQuestions, key, {{"questions", questions}}));
  return questions;
}

AgentResponse Stages::answer_question(const Persona& persona, const Question& question, EventSink& events) {
  ChatRequest request;
  request.system_message = config_.prompts.persona_system_prompt(persona.description);
  request.user_message = question.text;
  const auto reply = call(request, config_.agent, question.id);
  if (trim(reply.text).empty()) {
    throw StageError(StageError::Code::EmptyResponse, question.id, "agent returned an empty response",
                     false, parsing::Reason::EmptyResponse);
  }
  AgentResponse response{question.id, reply.text, config_.refusal.detect(reply.text)};
  events.push_back(make_event(stage::kResponses, question.id, response));
  return response;
}

ScoreExampleSet Stages::generate_exemplars(const Persona& persona, const Question& question,
                                           EventSink& events) {
  ChatRequest request;
  request.user_message = config_.prompts.score_examples(persona.description, question.text,
                                                        config_.task(question.task).rubric_outline);
  std::function<ScoreExampleSet(const std::string&)> parse = [&](const std::string& text) {
    auto set = parsing::parse_score_examples(text, "exemplars");
    set.question_id = question.id;
    return set;
  };
  auto set = with_parse_retries(stage::kExemplars, question.id, request, config_.reasoner, parse, events);
  events.push_back(make_event(stage::kExemplars, question.id, set));
  return set;
}

std::pair<std::vector<EvaluationRecord>, EnsembleScore> Stages::evaluate_response(
    const CompletedRubric& rubric, EventSink& events,
    const std::map<std::string, EvaluationRecord>& already_judged) {
  if (config_.evaluators.empty()) {
    throw StageError(StageError::Code::Parse, rubric.question_id, "no evaluators configured");
  }
  std::vector<EvaluationRecord> records;
  for (const auto& evaluator : config_.evaluators) {
    if (auto it = already_judged.find(evaluator.name); it != already_judged.end()) {
      records.push_back(it->second);
      continue;
    }
    const std::string key = judgement_key(rubric.question_id, evaluator.name);
    ChatRequest request;
    request.user_message = rubric.text;
    std::function<EvaluationRecord(const std::string&)> parse = [&](const std::string& text) {
      return EvaluationRecord{rubric.question_id, evaluator.name, text,
                              parsing::extract_final_score(text, "judgement")};
    };
    auto record = with_parse_retries(stage::kJudgements, key, request, evaluator, parse, events);
    events.push_back(make_event(stage::kJudgements, key, record));
    records.push_back(std::move(record));
  }
  auto score = ensemble(records);
  events.push_back(make_event(stage::kEnsembles, rubric.question_id, score));
  return {std::move(records), score};
}

// ---------------------------------------------------------------- scheduling

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first;
  std::mutex mu;
  auto work = [&] {
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first) first = std::current_exception();
        stop = true;
      }
    }
  };
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (first) std::rethrow_exception(first);
}

namespace {

// Appends each unit's events once every earlier unit has been committed.
class OrderedCommitter {
 public:
  OrderedCommitter(store::RunLog& log, std::size_t units) : log_(log), pending_(units) {}

  void submit(std::size_t index, EventSink events) {
    std::lock_guard lock(mu_);
    if (broken_) return;
    pending_[index] = std::move(events);
    while (next_ < pending_.size() && pending_[next_]) {
      EventSink sink = std::move(*pending_[next_]);
      pending_[next_].reset();
      ++next_;
      try {
        for (auto& e : sink) log_.append(std::move(e));
      } catch (...) {
        // Later units must not land after a gap in the log.
        broken_ = true;
        throw;
      }
    }
  }

 private:
  store::RunLog& log_;
  std::mutex mu_;
  std::vector<std::optional<EventSink>> pending_;
  std::size_t next_ = 0;
  bool broken_ = false;
};

// Stage outputs already in the log.
struct Replay {
  std::map<std::string, json> environments, questions, responses, exemplars, rubrics, judgements,
      ensembles;
  std::set<std::string> failed;

  explicit Replay(const store::RunLog& log) {
    environments = store::ok_payloads(log, stage::kEnvironments);
    questions = store::ok_payloads(log, stage::kQuestions);
    responses = store::ok_payloads(log, stage::kResponses);
    exemplars = store::ok_payloads(log, stage::kExemplars);
    rubrics = store::ok_payloads(log, stage::kRubrics);
    judgements = store::ok_payloads(log, stage::kJudgements);
    ensembles = store::ok_payloads(log, stage::kEnsembles);
    for (const auto& e : log.events(stage::kErrors)) {
      if (e.status == status::kFailed) failed.insert(e.key);
    }
  }
};

void check_credentials(const BenchmarkConfig& config) {
  std::vector<const ProviderProfile*> profiles = {&config.reasoner, &config.agent};
  for (const auto& e : config.evaluators) profiles.push_back(&e);
  for (const auto* p : profiles) {
    if (p->is_mock() || p->api_key_env.empty()) continue;
    const char* v = std::getenv(p->api_key_env.c_str());
    if (v == nullptr || *v == '\0') {
      throw ConfigError(p->name, "provider '" + p->name + "': environment variable " + p->api_key_env +
                                     " is not set");
    }
  }
}

std::unique_ptr<store::RunLog> open_log(const BenchmarkConfig& config, const RunOptions& options,
                                        const std::string& digest) {
  store::TimestampFn clock = store::utc_now;
  if (config.fixed_timestamps) clock = [] { return std::string("1970-01-01T00:00:00Z"); };
  const fs::path dir = config.run_dir();
  const bool exists = fs::exists(dir / "manifest.json");
  if (options.resume && exists) return store::RunLog::resume(dir, digest, clock);
  if (exists && options.overwrite) fs::remove_all(dir);
  return store::RunLog::create(dir, config.run_id, digest, clock);
}

}  // namespace

json run_metadata(const BenchmarkConfig& config) {
  json evaluators = json::array();
  for (const auto& e : config.evaluators) evaluators.push_back({{"name", e.name}, {"model", e.model}});
  json personas = json::array();
  for (const auto& p : config.personas) personas.push_back(p.id);
  return {{"agent", {{"name", config.agent.name}, {"model", config.agent.model}}},
          {"reasoner", {{"name", config.reasoner.name}, {"model", config.reasoner.model}}},
          {"evaluators", evaluators},
          {"personas", personas},
          {"questions_per_task", config.questions_per_task}};
}

RunOutcome run_benchmark(const BenchmarkConfig& config, const RunOptions& options) {
  validate(config);
  check_credentials(config);
  const std::string digest = config_digest(config);
  auto log = open_log(config, options, digest);
  log->set_metadata("benchmark", run_metadata(config));
  if (options.after_append) log->set_after_append(options.after_append);

  gateway::GatewayOptions gw_options = options.gateway;
  gw_options.retry = config.retry;
  gw_options.max_concurrency = config.concurrency;
  gateway::Gateway gw(gw_options);
  std::optional<gateway::ResponseCache> cache;
  if (!config.cache_dir.empty()) cache.emplace(config.cache_dir);
  Stages stages(config, gw, cache ? &*cache : nullptr);

  const Replay replay(*log);
  const std::size_t n_personas = config.personas.size();
  auto progress = [&](const std::string& line) {
    if (options.progress) *options.progress << line << std::endl;
  };

  try {
    // Phase 1: environment selection, one unit per persona.
    std::vector<std::optional<SelectedEnvironments>> selected(n_personas);
    {
      OrderedCommitter commit(*log, n_personas);
      parallel_for(n_personas, config.concurrency, [&](std::size_t i) {
        const Persona& persona = config.personas[i];
        EventSink events;
        if (auto it = replay.environments.find(persona.id); it != replay.environments.end()) {
          selected[i] = SelectedEnvironments{persona.id, it->second.at("environments").get<std::vector<std::string>>()};
        } else if (!replay.failed.contains(persona.id)) {
          try {
            selected[i] = stages.select_environments(persona, events);
          } catch (const StageError& e) {
            events.push_back(failure_event(e, persona.id, "persona", stage::kEnvironments));
          }
        }
        commit.submit(i, std::move(events));
      });
    }
    progress("environments: " + std::to_string(std::count_if(selected.begin(), selected.end(),
                                                              [](const auto& s) { return s.has_value(); })) +
             "/" + std::to_string(n_personas) + " personas");

    // Phase 2: question generation per (persona, task).
    struct TaskUnit {
      std::size_t persona;
      TaskKind task;
    };
    std::vector<TaskUnit> task_units;
    for (std::size_t i = 0; i < n_personas; ++i) {
      if (!selected[i]) continue;
      for (TaskKind t : kAllTasks) task_units.push_back({i, t});
    }
    std::vector<std::vector<Question>> questions(task_units.size());
    {
      OrderedCommitter commit(*log, task_units.size());
      parallel_for(task_units.size(), config.concurrency, [&](std::size_t u) {
        const auto& unit = task_units[u];
        const Persona& persona = config.personas[unit.persona];
        const std::string key = task_key(persona.id, unit.task);
        EventSink events;
        if (auto it = replay.questions.find(key); it != replay.questions.end()) {
          questions[u] = it->second.at("questions").get<std::vector<Question>>();
        } else if (!replay.failed.contains(key)) {
          try {
            questions[u] = stages.generate_questions(persona, *selected[unit.persona], unit.task, events);
          } catch (const StageError& e) {
            events.push_back(failure_event(e, key, "task", stage::kQuestions));
          }
        }
        commit.submit(u, std::move(events));
      });
    }
    progress("questions: " +
             std::to_string(std::count_if(questions.begin(), questions.end(),
                                          [](const auto& q) { return !q.empty(); })) +
             "/" + std::to_string(task_units.size()) + " persona-task pairs");

    // Phase 3: answer, exemplars, rubric and judges per question.
    struct ItemUnit {
      std::size_t persona;
      const Question* question;
    };
    std::vector<ItemUnit> items;
    for (std::size_t u = 0; u < task_units.size(); ++u) {
      for (const auto& q : questions[u]) {
        const std::string key = q.id;
        if (replay.ensembles.contains(key) || replay.failed.contains(key)) continue;
        items.push_back({task_units[u].persona, &q});
      }
    }
    std::atomic<std::size_t> done{0};
    {
      OrderedCommitter commit(*log, items.size());
      parallel_for(items.size(), config.concurrency, [&](std::size_t u) {
        const Persona& persona = config.personas[items[u].persona];
        const Question& q = *items[u].question;
        EventSink events;
        const char* current = stage::kResponses;
        try {
          AgentResponse response;
          if (auto it = replay.responses.find(q.id); it != replay.responses.end()) {
            response = it->second.get<AgentResponse>();
          } else {
            response = stages.answer_question(persona, q, events);
          }
          current = stage::kExemplars;
          ScoreExampleSet examples;
          if (auto it = replay.exemplars.find(q.id); it != replay.exemplars.end()) {
            examples = it->second.get<ScoreExampleSet>();
          } else {
            examples = stages.generate_exemplars(persona, q, events);
          }
          current = stage::kRubrics;
          CompletedRubric rubric;
          if (auto it = replay.rubrics.find(q.id); it != replay.rubrics.end()) {
            rubric = it->second.get<CompletedRubric>();
          } else {
            rubric = prompt::assemble_rubric(config.task(q.task).rubric_outline, examples,
                                             persona.description, q.text, response.text);
            events.push_back(make_event(stage::kRubrics, q.id, rubric));
          }
          current = stage::kJudgements;
          std::map<std::string, EvaluationRecord> judged;
          for (const auto& evaluator : config.evaluators) {
            auto it = replay.judgements.find(judgement_key(q.id, evaluator.name));
            if (it != replay.judgements.end()) judged[evaluator.name] = it->second.get<EvaluationRecord>();
          }
          stages.evaluate_response(rubric, events, judged);
        } catch (const StageError& e) {
          events.push_back(failure_event(e, q.id, "item", current));
        } catch (const prompt::PromptError& e) {
          events.push_back(failure_event(StageError(StageError::Code::Parse, q.id, e.what()), q.id, "item", current));
        }
        commit.submit(u, std::move(events));
        ++done;
      });
    }
    progress("items: " + std::to_string(done.load()) + " processed, " +
             std::to_string(replay.ensembles.size()) + " replayed");
  } catch (...) {
    // Leave the log open-ended for resume; record what we know.
    try {
      if (!log->closed()) log->finalize("partial");
    } catch (...) {
    }
    throw;
  }

  const std::size_t expected =
      n_personas * kAllTasks.size() * static_cast<std::size_t>(config.questions_per_task);
  const std::size_t scored = store::ok_payloads(*log, stage::kEnsembles).size();
  RunOutcome outcome;
  outcome.run_dir = config.run_dir();
  outcome.complete = scored == expected;
  outcome.provider_calls = gw.total_provider_calls();
  outcome.cache_hits = gw.cache_hits();
  outcome.calls_by_profile[config.reasoner.name] = gw.provider_calls(config.reasoner.name);
  outcome.calls_by_profile[config.agent.name] = gw.provider_calls(config.agent.name);
  for (const auto& e : config.evaluators) outcome.calls_by_profile[e.name] = gw.provider_calls(e.name);
  log->finalize(outcome.complete ? "complete" : "partial");
  return outcome;
}

}  // namespace pbench::pipeline
