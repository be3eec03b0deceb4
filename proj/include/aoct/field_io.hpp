#pragma once

#include <string>
#include <vector>

#include "aoct/field.hpp"

namespace aoct {

/// Versioned binary model file: magic "AOCTSDF\0", u32 format version,
/// architecture descriptor, UnitTransform, then all parameters as
/// little-endian f64 in to_flat order.
void save_model(const std::string& path, const MlpSdf& model);
MlpSdf load_model(const std::string& path);

/// JSON export for interchange/debugging (same content as the binary file).
void export_model_json(const std::string& path, const MlpSdf& model);

/// Training log: "# aoct-train-log v1" then step,loss,lr,skipped rows.
void write_train_log_csv(const std::string& path, const std::vector<TrainStep>& log);
std::vector<TrainStep> read_train_log_csv(const std::string& path);

}  // namespace aoct
