#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mra/train.hpp"

namespace mra {

enum class PlotKind { returns, mi, aux_loss, trajectories };

std::string to_string(PlotKind k);
PlotKind parse_plot_kind(const std::string& name);

// One curve per (game, role) for returns, one per game for mi and aux_loss.
// Each input run is one seed; the curve is the across-run mean at each
// per-game episode position and, with two or more runs, a min/max band.
std::string render_curves_svg(const std::vector<std::vector<EpisodeRecord>>& runs, PlotKind kind);

// Dump layout: {"steps": [{"pos": [[x,y],...], "landmarks": [[x,y],...]}, ...]}.
std::string render_trajectory_svg(const nlohmann::json& dump);
nlohmann::json trajectory_dump(const std::vector<TrajectoryStep>& steps);

// Reads the inputs (metrics JSONL, or trajectory dumps for that kind) and
// writes one SVG.
void emit_plot(const std::vector<std::filesystem::path>& inputs, PlotKind kind, const std::filesystem::path& out);

}  // namespace mra
