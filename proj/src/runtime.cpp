#include "coderain/runtime.hpp"

#include "coderain/config.hpp"

namespace coderain {

void set_iterations(AnyModel& m, int T, bool allow_extend) {
  if (T < 1) throw ConfigError("iteration override must be >= 1");
  const int trained = model_iterations(m);
  if (T > trained && !allow_extend)
    throw ConfigError("iteration override " + std::to_string(T) +
                      " exceeds the trained count " + std::to_string(trained));
  if (std::holds_alternative<ModelParams>(m)) {
    std::get<ModelParams>(m).T = T;
    return;
  }
  auto& ms = std::get<MsModelParams>(m);
  if (T <= ms.T) {
    ms.theta.resize(T);
  } else {
    const auto last = ms.theta.back();
    ms.theta.resize(T, last);
  }
  ms.T = T;
}

void apply_toggles(AnyModel& m, const Toggles& t) {
  std::visit([&](auto& model) { model.toggles = t; }, m);
}

}  // namespace coderain
