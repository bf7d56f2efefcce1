#pragma once

#include "nccqr/conformal.hpp"
#include "nccqr/datasets.hpp"
#include "nccqr/evaluation.hpp"
#include "nccqr/model_selection.hpp"
#include "nccqr/nn.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>

namespace nccqr {

using json = nlohmann::json;

inline constexpr int kNetworkFormatVersion = 1;
inline constexpr int kBandFormatVersion = 1;

/// {"format": "nccqr.network", "version": 1, "widths": [...],
///  "weights": [[row, ...] per layer], "biases": [[...] per layer],
///  "output_bound": null | B, "metadata": {...}}
json network_to_json(const NetworkParams& params, const json& metadata = json::object());
NetworkParams network_from_json(const json& doc);

json model_to_json(const QuantileModel& model);
QuantileModel model_from_json(const json& doc);

/// Band document: model, q_hat, alpha, calib_size and a provenance object
/// (config, seeds, config hash, split sizes).
json band_to_json(const ConformalBand& band, const json& provenance = json::object());
ConformalBand band_from_json(const json& doc);

json report_to_json(const EvalReport& report);
json summary_to_json(const ReplicationSummary& summary);
json dataset_to_json(const Dataset& data);
json cv_to_json(const CvResult& result);

/// FNV-1a 64 of the compact dump, as 16 hex digits.
std::string config_hash(const json& config);

/// Writes to "<path>.tmp" and renames over path once the write succeeded.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

json read_json_file(const std::filesystem::path& path);

}  // namespace nccqr
