#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "metalab/context/features.hpp"
#include "metalab/envs/switching_mdps.hpp"
#include "metalab/errors.hpp"
#include "metalab/metaopt/ac_learner.hpp"
#include "metalab/metaopt/q_learner.hpp"

namespace metalab::labcli {

using json = nlohmann::ordered_json;

enum class EnvKind { TwoColors, SwitchingMdps };
enum class AgentKind { ActorCritic, QLambda };

struct EnvSpec {
  EnvKind kind = EnvKind::TwoColors;
  int width = 10;  // Switching MDPs only
  int height = 10;
  std::uint64_t period = 100000;
  std::size_t n_mdps = 4;
  std::uint64_t lifetime = 1000000;
};

struct AgentSpec {
  AgentKind kind = AgentKind::ActorCritic;
  std::vector<std::size_t> hidden{256, 256};
  double lr = 0.1;
  double gamma = 0.99;
  // actor-critic
  std::size_t rollout = 16;
  double alpha_ent = 0.1;
  double alpha_l2 = 0.0;
  bool tune_alpha_ent = true;
  bool tune_alpha_l2 = false;
  // Q(lambda)
  double lambda = 0.9;
  double grad_ema = 0.9;
  std::size_t window = 16;
  double epsilon = 0.1;

  static AgentSpec defaults(AgentKind kind) {
    AgentSpec a;
    a.kind = kind;
    if (kind == AgentKind::QLambda) a.lr = 3e-5;
    return a;
  }
};

struct MetaSpec {
  metaopt::Objective objective = metaopt::Objective::None;
  std::size_t K = 1;
  std::size_t L = 8;
  double meta_lr = 1e-4;
  double alpha_outer_ent = 0.0;
  std::vector<std::size_t> hidden{64, 64};
};

struct ContextSpec {
  std::vector<context::Family> families;
  std::size_t history = 10;
  bool include_std = true;
};

struct RunSpec {
  std::uint64_t seed = 0;
  std::uint64_t log_stride = 1;
  bool log_inner = false;
  std::string out = "runs";
};

struct ExperimentConfig {
  EnvSpec env;
  AgentSpec agent;
  MetaSpec meta;
  ContextSpec context;
  RunSpec run;
  std::vector<std::string> overrides;  // candidate-list fields deliberately set off-list
};

inline const char* env_kind_name(EnvKind k) { return k == EnvKind::TwoColors ? "two_colors" : "switching_mdps"; }
inline const char* agent_kind_name(AgentKind k) { return k == AgentKind::ActorCritic ? "ac" : "q_lambda"; }

namespace detail {

/// Reads keys from one JSON object and rejects any it did not consume.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw UsageError("config section '" + name_ + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw UsageError("unknown key '" + it.key() + "' in config section '" + name_ + "'");
  }
  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw UsageError("config key '" + name_ + "." + key + "' has the wrong type: " + j_.at(key).dump());
    }
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      const auto& v = j_.at(key);
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        throw UsageError("config key '" + name_ + "." + key + "' must be a non-negative integer");
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  bool has(const char* key) const { return j_.contains(key); }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

template <class E>
E parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> table, const char* what) {
  for (const auto& [name, v] : table)
    if (s == name) return v;
  std::string names;
  for (const auto& [name, v] : table) names += std::string(names.empty() ? "" : ", ") + name;
  throw UsageError(std::string("unknown ") + what + " '" + s + "' (expected one of: " + names + ")");
}

inline bool in_list(double v, std::initializer_list<double> list) {
  return std::any_of(list.begin(), list.end(), [v](double c) { return std::abs(v - c) <= 1e-12 * std::abs(c); });
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  detail::Section top(j, "config");
  if (const json* e = top.sub("env")) {
    detail::Section s(*e, "env");
    std::string kind = env_kind_name(c.env.kind);
    s.get("kind", kind);
    c.env.kind = detail::parse_enum<EnvKind>(
        kind, {{"two_colors", EnvKind::TwoColors}, {"switching_mdps", EnvKind::SwitchingMdps}}, "env kind");
    s.get("width", c.env.width);
    s.get("height", c.env.height);
    s.get("period", c.env.period);
    s.get("n_mdps", c.env.n_mdps);
    s.get("lifetime", c.env.lifetime);
  }
  if (const json* a = top.sub("agent")) {
    detail::Section s(*a, "agent");
    std::string kind = "ac";
    s.get("kind", kind);
    c.agent = AgentSpec::defaults(
        detail::parse_enum<AgentKind>(kind, {{"ac", AgentKind::ActorCritic}, {"q_lambda", AgentKind::QLambda}},
                                      "agent kind"));
    s.get("hidden", c.agent.hidden);
    s.get("lr", c.agent.lr);
    s.get("gamma", c.agent.gamma);
    s.get("rollout", c.agent.rollout);
    s.get("alpha_ent", c.agent.alpha_ent);
    s.get("alpha_l2", c.agent.alpha_l2);
    s.get("tune_alpha_ent", c.agent.tune_alpha_ent);
    s.get("tune_alpha_l2", c.agent.tune_alpha_l2);
    s.get("lambda", c.agent.lambda);
    s.get("grad_ema", c.agent.grad_ema);
    s.get("window", c.agent.window);
    s.get("epsilon", c.agent.epsilon);
  }
  const bool q = c.agent.kind == AgentKind::QLambda;
  if (q) {
    c.meta.hidden = {128, 128};
    c.context.history = 100;
  }
  if (const json* m = top.sub("meta")) {
    detail::Section s(*m, "meta");
    std::string obj = metaopt::objective_name(c.meta.objective);
    s.get("objective", obj);
    c.meta.objective = detail::parse_enum<metaopt::Objective>(
        obj, {{"none", metaopt::Objective::None}, {"mg", metaopt::Objective::MG}, {"bmg", metaopt::Objective::BMG}},
        "meta objective");
    s.get("K", c.meta.K);
    s.get("L", c.meta.L);
    s.get("meta_lr", c.meta.meta_lr);
    s.get("alpha_outer_ent", c.meta.alpha_outer_ent);
    s.get("hidden", c.meta.hidden);
  }
  if (const json* x = top.sub("context")) {
    detail::Section s(*x, "context");
    std::vector<std::string> fams;
    s.get("families", fams);
    for (const auto& f : fams) c.context.families.push_back(context::parse_family(f));
    s.get("history", c.context.history);
    s.get("include_std", c.context.include_std);
  }
  if (const json* r = top.sub("run")) {
    detail::Section s(*r, "run");
    s.get("seed", c.run.seed);
    s.get("log_stride", c.run.log_stride);
    s.get("log_inner", c.run.log_inner);
    s.get("out", c.run.out);
  }
  top.get("overrides", c.overrides);
  return c;
}

inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["env"] = {{"kind", env_kind_name(c.env.kind)}, {"width", c.env.width},   {"height", c.env.height},
              {"period", c.env.period},            {"n_mdps", c.env.n_mdps}, {"lifetime", c.env.lifetime}};
  j["agent"] = {{"kind", agent_kind_name(c.agent.kind)},
                {"hidden", c.agent.hidden},
                {"lr", c.agent.lr},
                {"gamma", c.agent.gamma},
                {"rollout", c.agent.rollout},
                {"alpha_ent", c.agent.alpha_ent},
                {"alpha_l2", c.agent.alpha_l2},
                {"tune_alpha_ent", c.agent.tune_alpha_ent},
                {"tune_alpha_l2", c.agent.tune_alpha_l2},
                {"lambda", c.agent.lambda},
                {"grad_ema", c.agent.grad_ema},
                {"window", c.agent.window},
                {"epsilon", c.agent.epsilon}};
  j["meta"] = {{"objective", metaopt::objective_name(c.meta.objective)},
               {"K", c.meta.K},
               {"L", c.meta.L},
               {"meta_lr", c.meta.meta_lr},
               {"alpha_outer_ent", c.meta.alpha_outer_ent},
               {"hidden", c.meta.hidden}};
  std::vector<std::string> fams;
  for (auto f : c.context.families) fams.emplace_back(context::family_name(f));
  j["context"] = {{"families", fams}, {"history", c.context.history}, {"include_std", c.context.include_std}};
  j["run"] = {{"seed", c.run.seed}, {"log_stride", c.run.log_stride}, {"log_inner", c.run.log_inner},
              {"out", c.run.out}};
  j["overrides"] = c.overrides;
  return j;
}

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return config_to_json(a) == config_to_json(b);
}

/// Fields with a published candidate list, and whether `c` uses a value off
/// that list. Fields that do not apply to the configuration are skipped.
inline std::vector<std::string> off_candidate_fields(const ExperimentConfig& c) {
  using metaopt::Objective;
  std::vector<std::string> off;
  auto check = [&](bool applies, const char* field, bool ok) {
    if (applies && !ok) off.emplace_back(field);
  };
  const bool ac = c.agent.kind == AgentKind::ActorCritic;
  const bool meta = c.meta.objective != Objective::None;
  const bool ctx = !c.context.families.empty();
  const std::vector<std::size_t> wide{256, 256};
  check(true, "agent.hidden", c.agent.hidden == wide);
  if (ac) {
    check(!meta || !c.agent.tune_alpha_ent, "agent.alpha_ent", detail::in_list(c.agent.alpha_ent, {0, 0.1, 0.2, 0.4, 0.8}));
    check(meta, "meta.meta_lr", detail::in_list(c.meta.meta_lr, {1e-3, 1e-4, 1e-5, 1e-6}));
    check(meta, "meta.K", c.meta.K == 1 || c.meta.K == 3 || c.meta.K == 6);
    check(c.meta.objective == Objective::BMG, "meta.L", c.meta.L == 8 || c.meta.L == 16);
    check(c.meta.objective == Objective::MG, "meta.alpha_outer_ent", detail::in_list(c.meta.alpha_outer_ent, {0, 0.1}));
    check(ctx, "meta.hidden", c.meta.hidden == std::vector<std::size_t>{64, 64});
    check(ctx, "context.history", c.context.history == 10);
  } else {
    check(true, "agent.lr", detail::in_list(c.agent.lr, {3e-3, 1e-4, 3e-5, 1e-5}));
    check(!meta, "agent.epsilon", detail::in_list(c.agent.epsilon, {0.3, 0.1, 0.03, 0.01}));
    check(meta && !ctx, "meta.meta_lr", detail::in_list(c.meta.meta_lr, {1e-2, 3e-3, 1e-3, 3e-4}));
    check(meta && ctx, "meta.meta_lr", detail::in_list(c.meta.meta_lr, {1e-3, 1e-4, 1e-5, 1e-6}));
    check(meta, "meta.L", c.meta.L == 16 || c.meta.L == 32 || c.meta.L == 128);
    check(ctx, "meta.hidden", c.meta.hidden == std::vector<std::size_t>{128, 128});
    check(ctx, "context.history", c.context.history == 100);
  }
  return off;
}

inline const std::vector<std::string>& candidate_field_names() {
  static const std::vector<std::string> names{"agent.hidden", "agent.alpha_ent", "agent.lr",        "agent.epsilon",
                                              "meta.meta_lr", "meta.K",          "meta.L",          "meta.alpha_outer_ent",
                                              "meta.hidden",  "context.history"};
  return names;
}

inline context::FeatureSpec feature_spec(const ExperimentConfig& c) {
  context::FeatureSpec f;
  f.learner = c.agent.kind == AgentKind::ActorCritic ? context::LearnerKind::ActorCritic : context::LearnerKind::QLambda;
  f.families = c.context.families;
  f.history = c.context.history;
  f.include_std = c.agent.kind == AgentKind::ActorCritic && c.context.include_std;
  return f;
}

/// Throws UsageError naming the first invalid field.
inline void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& msg) { throw UsageError("invalid config: " + msg); };
  if (c.env.period == 0) fail("env.period must be positive");
  if (c.env.lifetime == 0) fail("env.lifetime must be positive");
  if (c.env.kind == EnvKind::SwitchingMdps) {
    if (c.env.n_mdps == 0) fail("env.n_mdps must be positive");
    if (c.env.width < 2 || c.env.height < 2 || c.env.width * c.env.height <= envs::kMaxWalls + 2)
      fail("env.width x env.height is too small for the wall layout");
  }
  const auto& a = c.agent;
  if (a.hidden.empty() || std::find(a.hidden.begin(), a.hidden.end(), 0u) != a.hidden.end())
    fail("agent.hidden needs at least one positive layer width");
  if (!(a.lr > 0) || !std::isfinite(a.lr)) fail("agent.lr must be positive");
  if (!(a.gamma >= 0 && a.gamma <= 1)) fail("agent.gamma must lie in [0, 1]");
  const bool ac = a.kind == AgentKind::ActorCritic;
  const bool meta = c.meta.objective != metaopt::Objective::None;
  if (ac) {
    if (a.rollout == 0) fail("agent.rollout must be positive");
    if (c.env.lifetime % a.rollout != 0) fail("env.lifetime must be a multiple of agent.rollout");
    if (!(a.alpha_ent >= 0)) fail("agent.alpha_ent must be non-negative");
    if (!(a.alpha_l2 >= 0)) fail("agent.alpha_l2 must be non-negative");
    if (meta && !a.tune_alpha_ent && !a.tune_alpha_l2) fail("a meta-gradient run must tune alpha_ent or alpha_l2");
  } else {
    if (!(a.lambda >= 0 && a.lambda <= 1)) fail("agent.lambda must lie in [0, 1]");
    if (!(a.grad_ema >= 0 && a.grad_ema < 1)) fail("agent.grad_ema must lie in [0, 1)");
    if (a.window == 0) fail("agent.window must be positive");
    if (!(a.epsilon >= 0 && a.epsilon <= 1)) fail("agent.epsilon must lie in [0, 1]");
  }
  metaopt::MetaConfig mc{c.meta.objective, c.meta.K, c.meta.L, c.meta.alpha_outer_ent, c.meta.meta_lr};
  try {
    mc.validate(!ac);
  } catch (const UsageError& e) {
    fail(e.what());
  }
  if (!(c.meta.alpha_outer_ent >= 0)) fail("meta.alpha_outer_ent must be non-negative");
  if (!c.context.families.empty()) {
    if (!meta) fail("context features need meta.objective mg or bmg");
    if (c.meta.hidden.empty() || std::find(c.meta.hidden.begin(), c.meta.hidden.end(), 0u) != c.meta.hidden.end())
      fail("meta.hidden needs at least one positive layer width");
    try {
      feature_spec(c).validate();
    } catch (const UsageError& e) {
      fail(e.what());
    }
  }
  if (c.run.log_stride == 0) fail("run.log_stride must be positive");
  const auto& known = candidate_field_names();
  for (const auto& o : c.overrides)
    if (std::find(known.begin(), known.end(), o) == known.end()) fail("overrides names unknown field '" + o + "'");
  for (const auto& f : off_candidate_fields(c))
    if (std::find(c.overrides.begin(), c.overrides.end(), f) == c.overrides.end())
      fail("'" + f + "' is not one of its candidate values; list it under overrides to use it anyway");
}

inline ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  auto c = config_from_json(j);
  validate(c);
  return c;
}

inline metaopt::ACLearnerConfig ac_learner_config(const ExperimentConfig& c) {
  metaopt::ACLearnerConfig out;
  out.agent = agents::ACConfig{c.agent.hidden, c.agent.lr, c.agent.gamma, c.agent.rollout};
  out.meta = metaopt::MetaConfig{c.meta.objective, c.meta.K, c.meta.L, c.meta.alpha_outer_ent, c.meta.meta_lr};
  const bool meta = c.meta.objective != metaopt::Objective::None;
  out.alpha_ent = c.agent.alpha_ent;
  out.alpha_l2 = c.agent.alpha_l2;
  out.tune_alpha_ent = meta && c.agent.tune_alpha_ent;
  out.tune_alpha_l2 = meta && c.agent.tune_alpha_l2;
  out.context = feature_spec(c);
  out.meta_hidden = c.meta.hidden;
  return out;
}

inline metaopt::QLearnerConfig q_learner_config(const ExperimentConfig& c) {
  metaopt::QLearnerConfig out;
  out.agent.hidden = c.agent.hidden;
  out.agent.lr = c.agent.lr;
  out.agent.gamma = c.agent.gamma;
  out.agent.lambda = c.agent.lambda;
  out.agent.grad_ema = c.agent.grad_ema;
  out.agent.window = c.agent.window;
  out.meta = metaopt::MetaConfig{c.meta.objective, c.meta.K, c.meta.L, c.meta.alpha_outer_ent, c.meta.meta_lr};
  out.epsilon = c.agent.epsilon;
  out.context = feature_spec(c);
  out.meta_hidden = c.meta.hidden;
  return out;
}

}  // namespace metalab::labcli
