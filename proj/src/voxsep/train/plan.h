#pragma once

// Training strategies as phase schedules. A phase fixes which modules are
// frozen and which loss terms are active; open-ended phases (budget -1) run
// under validation early stopping until the global epoch cap.

#include <cstdint>
#include <string>
#include <vector>

namespace voxsep::train {

enum class Strategy { SF_SF, SFT_SFT, SF_SFT, WUP, SF_SFT_F };

Strategy parse_strategy(const std::string& name);  // sfsf|sftsft|sfsft|wup|sfsftf
std::string strategy_name(Strategy s);

// Module names accepted in freeze sets: salience, assignment, encoder, decoder.
extern const std::vector<std::string> kAllModules;
// Loss term names: l_rec, l1, l2, l3.
extern const std::vector<std::string> kAllLossTerms;

struct Phase {
  std::int64_t epoch_budget = -1;        // -1: open-ended
  std::vector<std::string> frozen;       // module names
  std::vector<std::string> loss_terms;   // active subset of kAllLossTerms
};

struct TrainPlan {
  Strategy strategy = Strategy::SFT_SFT;
  std::vector<Phase> phases;
  std::int64_t max_epochs = 200;  // global cap across phases
  std::int64_t patience = 30;     // early-stopping patience, open phases only
};

// warmup_epochs sets the two fixed-budget phases of WUP (50 by default).
TrainPlan make_plan(Strategy s, std::int64_t max_epochs = 200, std::int64_t patience = 30,
                    std::int64_t warmup_epochs = 50);

// ParamStore prefix ("salience/", ...) for a module name; throws on unknown.
std::string module_prefix(const std::string& module);

}  // namespace voxsep::train
