#pragma once

#include <limits>

namespace mmfuse {

// Tracks validation loss and decays the learning rate after `patience`
// consecutive epochs without a strict improvement (by more than threshold).
struct PlateauState {
  double lr = 1e-4;
  double best = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  int reductions = 0;
};

struct PlateauOptions {
  double factor = 0.1;
  int patience = 3;
  double threshold = 1e-6;

  void validate() const;
};

// Updates `state` in place and returns the learning rate to use next.
double reduce_on_plateau_step(PlateauState& state, double val_loss, const PlateauOptions& opts = {});

enum class MonitorMode { minimize, maximize };

struct EarlyStopState {
  double best = std::numeric_limits<double>::quiet_NaN();
  int best_epoch = -1;
  int epochs_since_improvement = 0;
  int epochs_seen = 0;
  bool stopped = false;
  bool improved = false;  // whether the last update improved
};

// stopped becomes true once epochs_since_improvement exceeds patience.
EarlyStopState early_stop_update(EarlyStopState state, double metric, int patience,
                                 MonitorMode mode = MonitorMode::minimize);

}  // namespace mmfuse
