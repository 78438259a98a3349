#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chemrel/matrix.hpp"
#include "chemrel/relevance.hpp"
#include "chemrel/smiles.hpp"

namespace chemrel::render {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Rgb {
  double r = 0.0, g = 0.0, b = 0.0;
  std::string hex() const;
};

/// Light green sequential ramp, 0 -> #ebf3eb, 1 -> #008000, 9 stops with
/// linear interpolation between them.
inline constexpr std::array<std::string_view, 9> kGreenRamp = {
    "#ebf3eb", "#cde5cd", "#b0d6b0", "#92c892", "#75b975", "#57ab57", "#3a9c3a", "#1d8e1d", "#008000"};

/// Dark-to-light ramp for heatmaps (0 dark, 1 light).
inline constexpr std::array<std::string_view, 3> kHeatRamp = {"#0b2a0b", "#008000", "#ebf3eb"};

enum class Colormap { Green, Heat };

Rgb parse_hex(std::string_view hex);
/// Linear interpolation along the ramp; `t` is clamped to [0, 1].
Rgb sample(Colormap map, double t);

std::string xml_escape(std::string_view text);

/// 2D coordinates in bond-length units, one point per atom.
struct Depiction {
  std::vector<Point> coordinates;
  std::vector<smiles::Bond> bonds;
  std::vector<std::string> labels;
  std::vector<double> highlight;
};

/// Deterministic layout: ring systems as regular polygons (fused rings built
/// outward from the shared edge), chains by angle spreading with zigzag,
/// then a fixed number of clash-relaxation sweeps.
Depiction layout(const smiles::MolecularGraph& graph);

/// Smallest ring through each ring-closure bond, as cyclic atom lists.
std::vector<std::vector<std::size_t>> find_rings(const smiles::MolecularGraph& graph);

/// One depiction per molecule, drawn left to right. Highlight circle opacity
/// and colour follow the scaled relevance.
std::string molecule_svg(std::span<const Depiction> depictions, std::span<const relevance::AtomRelevance> relevance,
                         bool colorbar = true);
std::string molecule_svg(const Depiction& depiction, const relevance::AtomRelevance& relevance,
                         bool colorbar = true);

struct HeatmapSpec {
  Matrix matrix;
  std::vector<std::string> labels;
  std::string title;
  Colormap colormap = Colormap::Heat;
};

/// Panels side by side; colours normalized by the largest entry over all
/// panels (0 maps to the dark end).
std::string heatmaps_svg(std::span<const HeatmapSpec> panels, std::string_view title = "");

struct AttentionFigures {
  /// One panel per layer of head-averaged attention, shared scale.
  std::string layers;
  /// R - I on its own scale.
  std::string relevance;
};

AttentionFigures attention_heatmaps_svg(std::span<const Matrix> averaged, const relevance::RelevanceMatrix& relevance,
                                        std::span<const std::string> labels);

/// Least-squares slope of y on x; 0 when x has no spread.
double fit_slope(std::span<const double> x, std::span<const double> y);

/// Target (x) versus prediction (y) scatter with diagonal and fitted line.
std::string parity_plot_svg(std::span<const double> predictions, std::span<const double> targets,
                            std::string_view title = "");

}  // namespace chemrel::render
