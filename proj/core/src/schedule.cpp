#include "mmfuse/schedule.hpp"

#include "mmfuse/types.hpp"

#include <cmath>

namespace mmfuse {

void PlateauOptions::validate() const {
  if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("plateau factor must be in (0, 1)");
  if (patience < 1) throw ConfigError("plateau patience must be >= 1");
  if (threshold < 0.0) throw ConfigError("plateau threshold must be >= 0");
}

double reduce_on_plateau_step(PlateauState& state, double val_loss, const PlateauOptions& opts) {
  opts.validate();
  if (val_loss < state.best - opts.threshold) {
    state.best = val_loss;
    state.bad_epochs = 0;
    return state.lr;
  }
  if (++state.bad_epochs >= opts.patience) {
    state.lr *= opts.factor;
    state.bad_epochs = 0;
    ++state.reductions;
  }
  return state.lr;
}

EarlyStopState early_stop_update(EarlyStopState state, double metric, int patience, MonitorMode mode) {
  if (patience < 1) throw ConfigError("early-stopping patience must be >= 1");
  ++state.epochs_seen;
  const bool first = std::isnan(state.best);
  const bool better = first || (mode == MonitorMode::minimize ? metric < state.best : metric > state.best);
  state.improved = better;
  if (better) {
    state.best = metric;
    state.best_epoch = state.epochs_seen;
    state.epochs_since_improvement = 0;
  } else {
    ++state.epochs_since_improvement;
  }
  state.stopped = state.epochs_since_improvement > patience;
  return state;
}

}  // namespace mmfuse
