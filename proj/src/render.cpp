#include "chemrel/render.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numbers>
#include <set>

#include <fmt/format.h>

#include "chemrel/error.hpp"

namespace chemrel::render {

namespace {

constexpr double kPi = std::numbers::pi;

Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
Point operator*(Point a, double s) { return {a.x * s, a.y * s}; }
double norm(Point a) { return std::hypot(a.x, a.y); }
Point from_angle(double theta) { return {std::cos(theta), std::sin(theta)}; }
double angle_of(Point a) { return std::atan2(a.y, a.x); }

double wrap(double theta) {
  while (theta < 0.0) theta += 2.0 * kPi;
  while (theta >= 2.0 * kPi) theta -= 2.0 * kPi;
  return theta;
}

std::string num(double v) { return fmt::format("{:.2f}", v); }

}  // namespace

std::string Rgb::hex() const {
  const auto c = [](double v) { return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  return fmt::format("#{:02x}{:02x}{:02x}", c(r), c(g), c(b));
}

Rgb parse_hex(std::string_view hex) {
  if (hex.size() != 7 || hex[0] != '#') throw InvalidInputError(fmt::format("bad colour {}", hex));
  const auto channel = [&](std::size_t at) {
    return static_cast<double>(std::stoi(std::string(hex.substr(at, 2)), nullptr, 16)) / 255.0;
  };
  return {channel(1), channel(3), channel(5)};
}

Rgb sample(Colormap map, double t) {
  const std::span<const std::string_view> ramp =
      map == Colormap::Green ? std::span<const std::string_view>(kGreenRamp) : std::span<const std::string_view>(kHeatRamp);
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
  const double pos = t * static_cast<double>(ramp.size() - 1);
  const std::size_t lo = std::min(static_cast<std::size_t>(pos), ramp.size() - 2);
  const double frac = pos - static_cast<double>(lo);
  const Rgb a = parse_hex(ramp[lo]);
  const Rgb b = parse_hex(ramp[lo + 1]);
  return {a.r + (b.r - a.r) * frac, a.g + (b.g - a.g) * frac, a.b + (b.b - a.b) * frac};
}

std::string xml_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '&':
        out += "&amp;";
        break;
      case '"':
        out += "&quot;";
        break;
      case '\'':
        out += "&apos;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> find_rings(const smiles::MolecularGraph& graph) {
  const std::size_t n = graph.atoms.size();
  const std::size_t m = graph.bonds.size();
  const std::size_t rank = m + 1 >= n ? m + 1 - n : 0;
  if (rank == 0) return {};
  const auto adj = graph.adjacency();
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> bond_index;
  for (std::size_t i = 0; i < m; ++i)
    bond_index[{std::min(graph.bonds[i].a, graph.bonds[i].b), std::max(graph.bonds[i].a, graph.bonds[i].b)}] = i;

  // Candidates: the shortest cycle through every bond.
  std::set<std::vector<std::size_t>> seen;
  std::vector<std::vector<std::size_t>> candidates;
  for (const auto& bond : graph.bonds) {
    std::vector<std::size_t> parent(n, n);
    std::deque<std::size_t> q{bond.a};
    parent[bond.a] = bond.a;
    while (!q.empty() && parent[bond.b] == n) {
      const std::size_t v = q.front();
      q.pop_front();
      for (std::size_t w : adj[v]) {
        if ((v == bond.a && w == bond.b) || (v == bond.b && w == bond.a)) continue;
        if (parent[w] == n) {
          parent[w] = v;
          q.push_back(w);
        }
      }
    }
    if (parent[bond.b] == n) continue;
    std::vector<std::size_t> ring;
    for (std::size_t v = bond.b; v != bond.a; v = parent[v]) ring.push_back(v);
    ring.push_back(bond.a);
    std::vector<std::size_t> key = ring;
    std::sort(key.begin(), key.end());
    if (seen.insert(key).second) candidates.push_back(std::move(ring));
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const auto& a, const auto& b) { return a.size() < b.size(); });

  // Keep the smallest cycles whose bond sets are independent over GF(2).
  std::vector<std::vector<bool>> basis;
  std::vector<std::size_t> pivots;
  std::vector<std::vector<std::size_t>> rings;
  for (const auto& ring : candidates) {
    std::vector<bool> row(m, false);
    for (std::size_t k = 0; k < ring.size(); ++k) {
      const std::size_t a = ring[k], b = ring[(k + 1) % ring.size()];
      row[bond_index.at({std::min(a, b), std::max(a, b)})] = true;
    }
    for (std::size_t r = 0; r < basis.size(); ++r)
      if (row[pivots[r]])
        for (std::size_t c = 0; c < m; ++c) row[c] = row[c] != basis[r][c];
    const auto pivot = std::find(row.begin(), row.end(), true);
    if (pivot == row.end()) continue;
    pivots.push_back(static_cast<std::size_t>(pivot - row.begin()));
    basis.push_back(std::move(row));
    rings.push_back(ring);
    if (rings.size() == rank) break;
  }
  return rings;
}

Depiction layout(const smiles::MolecularGraph& graph) {
  const std::size_t n = graph.atoms.size();
  if (n == 0) throw InvalidInputError("layout: empty molecule");
  if (n > 100) throw InvalidInputError(fmt::format("layout: {} atoms exceeds the 100-atom limit", n));
  if (!graph.connected()) throw InvalidInputError("layout: molecule graph is disconnected");

  const auto adj = graph.adjacency();
  const auto rings = find_rings(graph);
  std::vector<std::vector<std::size_t>> rings_of(n);
  for (std::size_t r = 0; r < rings.size(); ++r)
    for (std::size_t a : rings[r]) rings_of[a].push_back(r);

  std::vector<Point> pos(n);
  std::vector<bool> placed(n, false);
  std::vector<bool> ring_done(rings.size(), false);
  std::vector<int> side(n, 1);
  std::deque<std::size_t> queue;

  const auto place = [&](std::size_t atom, Point p) {
    pos[atom] = p;
    placed[atom] = true;
    queue.push_back(atom);
  };

  // Places `run` on a regular-polygon arc from placed atom e1 to placed atom e2.
  const auto arc = [&](std::size_t e1, std::size_t e2, const std::vector<std::size_t>& run) {
    const double segments = static_cast<double>(run.size() + 1);
    const Point chord_vec = pos[e2] - pos[e1];
    const double chord = norm(chord_vec);
    const Point mid = (pos[e1] + pos[e2]) * 0.5;
    Point tangent = chord > 1e-9 ? chord_vec * (1.0 / chord) : Point{1.0, 0.0};
    Point out{-tangent.y, tangent.x};
    Point away{0.0, 0.0};
    std::size_t count = 0;
    for (std::size_t e : {e1, e2})
      for (std::size_t w : adj[e])
        if (placed[w] && w != e1 && w != e2) {
          away = away + pos[w];
          ++count;
        }
    if (count > 0) {
      const Point to = away * (1.0 / static_cast<double>(count)) - mid;
      if (out.x * to.x + out.y * to.y > 0.0) out = out * -1.0;
    }
    if (chord >= segments - 1e-9) {
      for (std::size_t k = 0; k < run.size(); ++k)
        place(run[k], pos[e1] + chord_vec * (static_cast<double>(k + 1) / segments) + out * 0.3);
      return;
    }
    // Unit chords each subtending phi: chord = sin(n phi / 2) / sin(phi / 2).
    double lo = 1e-9, hi = 2.0 * kPi / segments;
    for (int it = 0; it < 100; ++it) {
      const double phi = 0.5 * (lo + hi);
      (std::sin(segments * phi / 2.0) / std::sin(phi / 2.0) > chord ? lo : hi) = phi;
    }
    const double phi = 0.5 * (lo + hi);
    const double radius = 1.0 / (2.0 * std::sin(phi / 2.0));
    const Point center = mid - out * (radius * std::cos(segments * phi / 2.0));
    const double start = angle_of(pos[e1] - center);
    double turn = angle_of(out) - start;
    while (turn > kPi) turn -= 2.0 * kPi;
    while (turn < -kPi) turn += 2.0 * kPi;
    const double sign = turn >= 0.0 ? 1.0 : -1.0;
    for (std::size_t k = 0; k < run.size(); ++k)
      place(run[k], center + from_angle(start + sign * phi * static_cast<double>(k + 1)) * radius);
  };

  const auto place_ring = [&](std::size_t r, std::size_t anchor) {
    const auto& cyc = rings[r];
    const std::size_t m = cyc.size();
    const double radius = 1.0 / (2.0 * std::sin(kPi / static_cast<double>(m)));
    const double step = 2.0 * kPi / static_cast<double>(m);
    ring_done[r] = true;

    std::size_t placed_count = 0;
    for (std::size_t a : cyc) placed_count += placed[a] ? 1 : 0;
    if (placed_count >= 2) {
      // Fused or bridged: every run of unplaced atoms becomes a regular arc
      // between its two placed endpoints, bulging away from drawn neighbours.
      for (std::size_t i = 0; i < m; ++i) {
        if (!placed[cyc[i]] || placed[cyc[(i + 1) % m]]) continue;
        std::vector<std::size_t> run;
        std::size_t j = (i + 1) % m;
        while (!placed[cyc[j]]) {
          run.push_back(cyc[j]);
          j = (j + 1) % m;
        }
        arc(cyc[i], cyc[j], run);
      }
      return;
    }

    // Spiro / substituent case: grow the ring away from the anchor's neighbours.
    const std::size_t ia = static_cast<std::size_t>(std::find(cyc.begin(), cyc.end(), anchor) - cyc.begin());
    Point dir{0.0, 0.0};
    for (std::size_t w : adj[anchor])
      if (placed[w]) dir = dir + (pos[anchor] - pos[w]) * (1.0 / std::max(norm(pos[anchor] - pos[w]), 1e-9));
    if (norm(dir) < 1e-9) dir = {0.0, -1.0};
    dir = dir * (1.0 / norm(dir));
    const Point center = placed[anchor] ? pos[anchor] + dir * radius : Point{0.0, 0.0};
    const double theta_a = placed[anchor] ? angle_of(pos[anchor] - center) : kPi / 2.0;
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t atom = cyc[(ia + k) % m];
      if (!placed[atom]) place(atom, center + from_angle(theta_a + step * static_cast<double>(k)) * radius);
    }
  };

  if (!rings_of[0].empty()) {
    place_ring(rings_of[0].front(), 0);
  } else {
    place(0, {0.0, 0.0});
  }

  while (!queue.empty()) {
    const std::size_t a = queue.front();
    queue.pop_front();
    for (std::size_t r : rings_of[a])
      if (!ring_done[r]) place_ring(r, a);

    std::vector<std::size_t> todo;
    std::vector<double> taken;
    for (std::size_t w : adj[a]) {
      if (placed[w]) {
        taken.push_back(wrap(angle_of(pos[w] - pos[a])));
      } else if (std::find(todo.begin(), todo.end(), w) == todo.end()) {
        todo.push_back(w);
      }
    }
    if (todo.empty()) continue;
    std::vector<double> angles;
    if (taken.empty()) {
      for (std::size_t i = 0; i < todo.size(); ++i)
        angles.push_back(-kPi / 6.0 + 2.0 * kPi * static_cast<double>(i) / static_cast<double>(todo.size()));
    } else if (taken.size() == 1 && todo.size() == 1) {
      angles.push_back(taken[0] + static_cast<double>(side[a]) * 2.0 * kPi / 3.0);
    } else {
      std::sort(taken.begin(), taken.end());
      double best_gap = -1.0, best_start = 0.0;
      for (std::size_t i = 0; i < taken.size(); ++i) {
        const double start = taken[i];
        const double end = i + 1 < taken.size() ? taken[i + 1] : taken[0] + 2.0 * kPi;
        if (end - start > best_gap + 1e-12) {
          best_gap = end - start;
          best_start = start;
        }
      }
      for (std::size_t i = 0; i < todo.size(); ++i)
        angles.push_back(best_start + best_gap * static_cast<double>(i + 1) / static_cast<double>(todo.size() + 1));
    }
    for (std::size_t i = 0; i < todo.size(); ++i) {
      side[todo[i]] = -side[a];
      place(todo[i], pos[a] + from_angle(angles[i]));
    }
  }

  // Clash relaxation: push apart non-bonded pairs closer than the threshold.
  std::set<std::pair<std::size_t, std::size_t>> bonded;
  for (const auto& b : graph.bonds) bonded.insert({std::min(b.a, b.b), std::max(b.a, b.b)});
  constexpr double kMinDistance = 0.8;
  constexpr int kSweeps = 100;
  for (int sweep = 0; sweep < kSweeps; ++sweep) {
    bool moved = false;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        if (bonded.contains({i, j})) continue;
        const Point d = pos[j] - pos[i];
        const double dist = norm(d);
        if (dist >= kMinDistance) continue;
        const Point unit = dist < 1e-9 ? from_angle(static_cast<double>(i * 7 + j * 13)) : d * (1.0 / dist);
        const Point push = unit * ((kMinDistance - dist) / 2.0);
        pos[i] = pos[i] - push;
        pos[j] = pos[j] + push;
        moved = true;
      }
    if (!moved) break;
    // Springs keep bonds near unit length while clashes are resolved.
    for (const auto& b : graph.bonds) {
      const Point d = pos[b.b] - pos[b.a];
      const double dist = norm(d);
      if (dist < 1e-9 || std::abs(dist - 1.0) < 0.02) continue;
      const Point pull = d * ((dist - 1.0) / (4.0 * dist));
      pos[b.a] = pos[b.a] + pull;
      pos[b.b] = pos[b.b] - pull;
    }
  }

  Depiction out;
  out.coordinates = std::move(pos);
  out.bonds = graph.bonds;
  for (const auto& atom : graph.atoms) {
    std::string label = atom.element;
    if (atom.aromatic) label[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(label[0])));
    if (atom.hydrogens > 0) label += atom.hydrogens == 1 ? "H" : fmt::format("H{}", atom.hydrogens);
    if (atom.charge != 0) {
      const int mag = std::abs(atom.charge);
      label += (mag > 1 ? std::to_string(mag) : std::string()) + (atom.charge > 0 ? "+" : "-");
    }
    out.labels.push_back(std::move(label));
  }
  out.highlight.assign(n, 0.0);
  return out;
}

namespace {

constexpr double kBondPx = 40.0;
constexpr double kMargin = 36.0;

bool shows_label(const Depiction& d, std::size_t atom) { return d.labels[atom] != "C"; }

struct Bounds {
  double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;
};

Bounds bounds_of(const Depiction& d) {
  Bounds b{d.coordinates[0].x, d.coordinates[0].y, d.coordinates[0].x, d.coordinates[0].y};
  for (const auto& p : d.coordinates) {
    b.min_x = std::min(b.min_x, p.x);
    b.min_y = std::min(b.min_y, p.y);
    b.max_x = std::max(b.max_x, p.x);
    b.max_y = std::max(b.max_y, p.y);
  }
  return b;
}

void draw_molecule(std::string& svg, const Depiction& d, const relevance::AtomRelevance& rel, double offset_x,
                   double offset_y, std::size_t index) {
  const Bounds b = bounds_of(d);
  const auto px = [&](Point p) {
    return Point{offset_x + (p.x - b.min_x) * kBondPx, offset_y + (p.y - b.min_y) * kBondPx};
  };
  svg += fmt::format("<g class=\"molecule\" id=\"molecule{}\">\n", index);
  for (std::size_t a = 0; a < d.coordinates.size(); ++a) {
    const double s = rel.atoms[a].scaled;
    const Point p = px(d.coordinates[a]);
    svg += fmt::format(
        "<circle class=\"highlight\" data-atom=\"{}\" cx=\"{}\" cy=\"{}\" r=\"15\" fill=\"{}\" fill-opacity=\"{:.4f}\"/>\n",
        a, num(p.x), num(p.y), sample(Colormap::Green, s).hex(), s);
  }
  for (const auto& bond : d.bonds) {
    Point p = px(d.coordinates[bond.a]);
    Point q = px(d.coordinates[bond.b]);
    const Point dir = (q - p) * (1.0 / std::max(norm(q - p), 1e-9));
    if (shows_label(d, bond.a)) p = p + dir * 9.0;
    if (shows_label(d, bond.b)) q = q - dir * 9.0;
    const Point normal{-dir.y, dir.x};
    const auto line = [&](Point a, Point c, bool dashed) {
      svg += fmt::format("<line class=\"bond\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#222222\" "
                         "stroke-width=\"1.6\"{}/>\n",
                         num(a.x), num(a.y), num(c.x), num(c.y), dashed ? " stroke-dasharray=\"3,2\"" : "");
    };
    switch (bond.order) {
      case smiles::BondOrder::Single:
        line(p, q, false);
        break;
      case smiles::BondOrder::Double:
        line(p + normal * 2.5, q + normal * 2.5, false);
        line(p - normal * 2.5, q - normal * 2.5, false);
        break;
      case smiles::BondOrder::Triple:
        line(p, q, false);
        line(p + normal * 4.0, q + normal * 4.0, false);
        line(p - normal * 4.0, q - normal * 4.0, false);
        break;
      case smiles::BondOrder::Aromatic:
        line(p, q, false);
        line(p + normal * 4.0 + dir * 4.0, q + normal * 4.0 - dir * 4.0, true);
        break;
    }
  }
  for (std::size_t a = 0; a < d.coordinates.size(); ++a) {
    if (!shows_label(d, a)) continue;
    const Point p = px(d.coordinates[a]);
    svg += fmt::format("<text class=\"atom-label\" x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" "
                       "text-anchor=\"middle\" dominant-baseline=\"central\">{}</text>\n",
                       num(p.x), num(p.y), xml_escape(d.labels[a]));
  }
  svg += "</g>\n";
}

std::string svg_open(double width, double height) {
  return fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n"
      "<rect class=\"background\" x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n",
      num(width), num(height), num(width), num(height), num(width), num(height));
}

}  // namespace

std::string molecule_svg(std::span<const Depiction> depictions, std::span<const relevance::AtomRelevance> relevance,
                         bool colorbar) {
  if (depictions.size() != relevance.size() || depictions.empty()) {
    throw InvalidInputError("molecule_svg: need one relevance set per depiction");
  }
  for (std::size_t i = 0; i < depictions.size(); ++i) {
    if (relevance[i].atoms.size() != depictions[i].coordinates.size()) {
      throw InvalidInputError(fmt::format("molecule_svg: molecule {} has {} atoms but {} relevance values", i,
                                          depictions[i].coordinates.size(), relevance[i].atoms.size()));
    }
  }
  std::vector<double> x_offsets;
  double width = kMargin;
  double height = 0.0;
  for (const auto& d : depictions) {
    const Bounds b = bounds_of(d);
    x_offsets.push_back(width);
    width += (b.max_x - b.min_x) * kBondPx + 2.0 * kMargin;
    height = std::max(height, (b.max_y - b.min_y) * kBondPx);
  }
  height += 2.0 * kMargin;
  const double bar_height = colorbar ? 56.0 : 0.0;
  width = std::max(width, 260.0);
  std::string svg = svg_open(width, height + bar_height);
  for (std::size_t i = 0; i < depictions.size(); ++i) {
    draw_molecule(svg, depictions[i], relevance[i], x_offsets[i], kMargin, i);
  }
  if (colorbar) {
    svg += "<defs><linearGradient id=\"relevance-ramp\" x1=\"0\" y1=\"0\" x2=\"1\" y2=\"0\">\n";
    for (std::size_t i = 0; i < kGreenRamp.size(); ++i) {
      svg += fmt::format("<stop offset=\"{:.4f}\" stop-color=\"{}\"/>\n",
                         static_cast<double>(i) / static_cast<double>(kGreenRamp.size() - 1), kGreenRamp[i]);
    }
    svg += "</linearGradient></defs>\n";
    const double y = height + 8.0;
    svg += fmt::format("<g class=\"colorbar\">\n<rect x=\"{}\" y=\"{}\" width=\"200\" height=\"12\" "
                       "fill=\"url(#relevance-ramp)\" stroke=\"#888888\"/>\n",
                       num(kMargin), num(y));
    svg += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\">0</text>\n",
                       num(kMargin), num(y + 26.0));
    svg += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" "
                       "text-anchor=\"end\">1</text>\n",
                       num(kMargin + 200.0), num(y + 26.0));
    svg += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" "
                       "text-anchor=\"middle\">relative importance (a.u.)</text>\n</g>\n",
                       num(kMargin + 100.0), num(y + 40.0));
  }
  svg += "</svg>\n";
  return svg;
}

std::string molecule_svg(const Depiction& depiction, const relevance::AtomRelevance& relevance, bool colorbar) {
  return molecule_svg(std::span<const Depiction>(&depiction, 1),
                      std::span<const relevance::AtomRelevance>(&relevance, 1), colorbar);
}

std::string heatmaps_svg(std::span<const HeatmapSpec> panels, std::string_view title) {
  if (panels.empty()) throw InvalidInputError("heatmaps_svg: no panels");
  double peak = 0.0;
  for (const auto& p : panels) {
    if (p.matrix.rows() != p.labels.size() || p.matrix.cols() != p.labels.size()) {
      throw InvalidInputError(fmt::format("heatmap '{}': {} labels for a {}x{} matrix", p.title, p.labels.size(),
                                          p.matrix.rows(), p.matrix.cols()));
    }
    for (double v : p.matrix.data()) peak = std::max(peak, v);
  }
  constexpr double kCell = 22.0;
  constexpr double kLabelSpace = 56.0;
  constexpr double kGap = 30.0;
  constexpr double kTitle = 28.0;
  double width = kGap;
  double height = 0.0;
  std::vector<double> x0;
  for (const auto& p : panels) {
    x0.push_back(width + kLabelSpace);
    width += kLabelSpace + static_cast<double>(p.matrix.cols()) * kCell + kGap;
    height = std::max(height, static_cast<double>(p.matrix.rows()) * kCell);
  }
  const double top = kTitle + (title.empty() ? 0.0 : kTitle);
  height += top + kLabelSpace + kGap;
  std::string svg = svg_open(width, height);
  if (!title.empty()) {
    svg += fmt::format("<text class=\"figure-title\" x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" "
                       "text-anchor=\"middle\">{}</text>\n",
                       num(width / 2.0), xml_escape(title));
  }
  for (std::size_t k = 0; k < panels.size(); ++k) {
    const auto& p = panels[k];
    const double px = x0[k];
    const double py = top;
    svg += fmt::format("<g class=\"panel\" id=\"panel{}\">\n", k);
    svg += fmt::format("<text class=\"panel-title\" x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" "
                       "text-anchor=\"middle\">{}</text>\n",
                       num(px + static_cast<double>(p.matrix.cols()) * kCell / 2.0), num(py - 8.0), xml_escape(p.title));
    for (std::size_t i = 0; i < p.matrix.rows(); ++i)
      for (std::size_t j = 0; j < p.matrix.cols(); ++j) {
        const double t = peak > 0.0 ? std::max(p.matrix(i, j), 0.0) / peak : 0.0;
        svg += fmt::format("<rect class=\"cell\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n",
                           num(px + static_cast<double>(j) * kCell), num(py + static_cast<double>(i) * kCell),
                           num(kCell), num(kCell), sample(p.colormap, t).hex());
      }
    for (std::size_t i = 0; i < p.labels.size(); ++i) {
      const double c = static_cast<double>(i) * kCell + kCell / 2.0;
      svg += fmt::format("<text class=\"row-label\" x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"10\" "
                         "text-anchor=\"end\" dominant-baseline=\"central\">{}</text>\n",
                         num(px - 4.0), num(py + c), xml_escape(p.labels[i]));
      const double lx = px + c;
      const double ly = py + static_cast<double>(p.matrix.rows()) * kCell + 6.0;
      svg += fmt::format("<text class=\"col-label\" x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"10\" "
                         "text-anchor=\"end\" transform=\"rotate(-90 {} {})\">{}</text>\n",
                         num(lx), num(ly), num(lx), num(ly), xml_escape(p.labels[i]));
    }
    svg += "</g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

AttentionFigures attention_heatmaps_svg(std::span<const Matrix> averaged, const relevance::RelevanceMatrix& relevance,
                                        std::span<const std::string> labels) {
  const std::size_t t = labels.size();
  std::vector<HeatmapSpec> layers;
  for (std::size_t l = 0; l < averaged.size(); ++l) {
    if (averaged[l].rows() != t) throw InvalidInputError("attention_heatmaps_svg: inconsistent token counts");
    layers.push_back({averaged[l], {labels.begin(), labels.end()}, fmt::format("layer {}", l + 1), Colormap::Heat});
  }
  if (relevance.values.rows() != t) throw InvalidInputError("attention_heatmaps_svg: inconsistent token counts");
  Matrix shifted = relevance.values;
  for (std::size_t i = 0; i < t; ++i) shifted(i, i) -= 1.0;
  const HeatmapSpec r{std::move(shifted), {labels.begin(), labels.end()}, "R - I", Colormap::Heat};
  AttentionFigures out;
  out.layers = layers.empty() ? std::string() : heatmaps_svg(layers, "head-averaged gradient-weighted attention");
  out.relevance = heatmaps_svg(std::span<const HeatmapSpec>(&r, 1), "aggregated relevance");
  return out;
}

double fit_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidInputError("fit_slope: length mismatch");
  if (x.empty()) throw InvalidInputError("fit_slope: no points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

std::string parity_plot_svg(std::span<const double> predictions, std::span<const double> targets,
                            std::string_view title) {
  if (predictions.size() != targets.size()) {
    throw InvalidInputError(fmt::format("parity plot: {} predictions vs {} targets", predictions.size(), targets.size()));
  }
  if (predictions.empty()) throw InvalidInputError("parity plot: no points");
  const double slope = fit_slope(targets, predictions);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    mx += targets[i];
    my += predictions[i];
  }
  mx /= static_cast<double>(targets.size());
  my /= static_cast<double>(targets.size());
  const double intercept = my - slope * mx;

  double lo = std::min(*std::min_element(targets.begin(), targets.end()),
                       *std::min_element(predictions.begin(), predictions.end()));
  double hi = std::max(*std::max_element(targets.begin(), targets.end()),
                       *std::max_element(predictions.begin(), predictions.end()));
  if (hi - lo < 1e-9) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  constexpr double kSize = 360.0;
  constexpr double kLeft = 60.0;
  constexpr double kTop = 40.0;
  const auto sx = [&](double v) { return kLeft + (v - lo) / (hi - lo) * kSize; };
  const auto sy = [&](double v) { return kTop + kSize - (v - lo) / (hi - lo) * kSize; };
  const double alpha = std::clamp(30.0 / static_cast<double>(targets.size()), 0.15, 0.8);

  std::string svg = svg_open(kLeft + kSize + 30.0, kTop + kSize + 60.0);
  if (!title.empty()) {
    svg += fmt::format("<text x=\"{}\" y=\"22\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}"
                       "</text>\n",
                       num(kLeft + kSize / 2.0), xml_escape(title));
  }
  svg += fmt::format("<rect class=\"frame\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" "
                     "stroke=\"#444444\"/>\n",
                     num(kLeft), num(kTop), num(kSize), num(kSize));
  svg += fmt::format("<line class=\"diagonal\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#bbbbbb\" "
                     "stroke-dasharray=\"4,3\"/>\n",
                     num(sx(lo)), num(sy(lo)), num(sx(hi)), num(sy(hi)));
  for (std::size_t i = 0; i < targets.size(); ++i) {
    svg += fmt::format("<circle class=\"point\" cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"#1d8e1d\" fill-opacity=\"{:.3f}\"/>\n",
                       num(sx(targets[i])), num(sy(predictions[i])), alpha);
  }
  // Fitted line clipped to the plot range.
  double x1 = lo, x2 = hi;
  double y1 = intercept + slope * x1, y2 = intercept + slope * x2;
  if (std::abs(slope) > 1e-12) {
    const auto clip = [&](double& x, double& y) {
      if (y < lo) {
        y = lo;
        x = (lo - intercept) / slope;
      } else if (y > hi) {
        y = hi;
        x = (hi - intercept) / slope;
      }
    };
    clip(x1, y1);
    clip(x2, y2);
  } else {
    y1 = y2 = std::clamp(intercept, lo, hi);
  }
  svg += fmt::format("<line class=\"fit\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#777777\" "
                     "stroke-width=\"1.5\"/>\n",
                     num(sx(x1)), num(sy(y1)), num(sx(x2)), num(sy(y2)));
  svg += fmt::format("<text class=\"annotation\" x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">"
                     "slope = {:.3f}, n = {}</text>\n",
                     num(kLeft + 8.0), num(kTop + 18.0), slope, targets.size());
  svg += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">"
                     "experimental log(S)</text>\n",
                     num(kLeft + kSize / 2.0), num(kTop + kSize + 40.0));
  svg += fmt::format("<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
                     "transform=\"rotate(-90 16 {})\">predicted log(S)</text>\n",
                     num(kTop + kSize / 2.0), num(kTop + kSize / 2.0));
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    svg += fmt::format("<text class=\"tick\" x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" "
                       "text-anchor=\"middle\">{:.1f}</text>\n",
                       num(sx(v)), num(kTop + kSize + 16.0), v);
    svg += fmt::format("<text class=\"tick\" x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" "
                       "text-anchor=\"end\">{:.1f}</text>\n",
                       num(kLeft - 6.0), num(sy(v) + 3.0), v);
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace chemrel::render
