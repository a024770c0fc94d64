#include "voxsep/train/plan.h"

#include "voxsep/common.h"

namespace voxsep::train {

const std::vector<std::string> kAllModules = {"salience", "assignment", "encoder", "decoder"};
const std::vector<std::string> kAllLossTerms = {"l_rec", "l1", "l2", "l3"};

Strategy parse_strategy(const std::string& name) {
  if (name == "sfsf") return Strategy::SF_SF;
  if (name == "sftsft") return Strategy::SFT_SFT;
  if (name == "sfsft") return Strategy::SF_SFT;
  if (name == "wup") return Strategy::WUP;
  if (name == "sfsftf") return Strategy::SF_SFT_F;
  throw ConfigError("unknown strategy: " + name + " (expected sfsf|sftsft|sfsft|wup|sfsftf)");
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::SF_SF: return "sfsf";
    case Strategy::SFT_SFT: return "sftsft";
    case Strategy::SF_SFT: return "sfsft";
    case Strategy::WUP: return "wup";
    case Strategy::SF_SFT_F: return "sfsftf";
  }
  throw ConfigError("invalid strategy enum");
}

std::string module_prefix(const std::string& module) {
  if (module == "salience") return "salience/";
  if (module == "assignment") return "assign/";
  if (module == "encoder") return "encoder/";
  if (module == "decoder") return "decoder/";
  throw ConfigError("unknown module in freeze set: " + module);
}

TrainPlan make_plan(Strategy s, std::int64_t max_epochs, std::int64_t patience,
                    std::int64_t warmup_epochs) {
  VX_CHECK(max_epochs > 0, "plan: max_epochs must be positive");
  VX_CHECK(patience > 0, "plan: patience must be positive");
  VX_CHECK(warmup_epochs > 0, "plan: warmup_epochs must be positive");
  TrainPlan plan;
  plan.strategy = s;
  plan.max_epochs = max_epochs;
  plan.patience = patience;
  const std::vector<std::string> full = kAllLossTerms;
  switch (s) {
    case Strategy::SF_SF:
      plan.phases.push_back({-1, {"salience", "assignment"}, {"l_rec"}});
      break;
    case Strategy::SFT_SFT:
      plan.phases.push_back({-1, {}, full});
      break;
    case Strategy::SF_SFT:
      plan.phases.push_back({-1, {"salience"}, full});
      break;
    case Strategy::WUP:
      // Assignment fine-tunes alone on the map losses, then the synthesis
      // side trains under a frozen F0 stack, then everything runs jointly.
      plan.phases.push_back({warmup_epochs, {"salience", "encoder", "decoder"}, {"l1", "l2", "l3"}});
      plan.phases.push_back({warmup_epochs, {"salience", "assignment"}, {"l_rec"}});
      plan.phases.push_back({-1, {}, full});
      break;
    case Strategy::SF_SFT_F:
      plan.phases.push_back({-1, {"salience"}, full});
      plan.phases.push_back({-1, {}, full});
      break;
  }
  return plan;
}

}  // namespace voxsep::train
