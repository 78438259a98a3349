#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "chemrel/data.hpp"
#include "chemrel/error.hpp"
#include "chemrel/render.hpp"
#include "fixtures.hpp"

using namespace chemrel;
using namespace chemrel::render;
namespace fx = chemrel::testing;
namespace pt = boost::property_tree;

namespace {

pt::ptree parse_svg(const std::string& svg) {
  std::istringstream in(svg);
  pt::ptree tree;
  pt::read_xml(in, tree);
  return tree;
}

// Counts elements named `tag` with class `cls` anywhere below `node`.
std::size_t count(const pt::ptree& node, const std::string& tag, const std::string& cls) {
  std::size_t n = 0;
  for (const auto& [name, child] : node) {
    if (name == tag && child.get<std::string>("<xmlattr>.class", "") == cls) ++n;
    n += count(child, tag, cls);
  }
  return n;
}

relevance::AtomRelevance ramp_weights(std::size_t atoms) {
  relevance::AtomRelevance r;
  for (std::size_t i = 0; i < atoms; ++i) {
    const double s = atoms > 1 ? static_cast<double>(i) / static_cast<double>(atoms - 1) : 0.5;
    r.atoms.push_back({i, "C", i + 1, s, s});
  }
  return r;
}

double dist(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

TEST(Palette, EndpointsAndInterpolation) {
  EXPECT_EQ(sample(Colormap::Green, 0.0).hex(), "#ebf3eb");
  EXPECT_EQ(sample(Colormap::Green, 1.0).hex(), "#008000");
  EXPECT_EQ(sample(Colormap::Green, 0.5).hex(), "#75b975");
  EXPECT_EQ(sample(Colormap::Green, 7.0).hex(), "#008000");
  EXPECT_EQ(sample(Colormap::Heat, 0.0).hex(), "#0b2a0b");
  EXPECT_THROW(parse_hex("green"), InvalidInputError);
}

TEST(Palette, GreenRampIsMonotoneInLightness) {
  double prev = 1e9;
  for (int i = 0; i <= 20; ++i) {
    const auto c = sample(Colormap::Green, i / 20.0);
    const double lum = 0.2126 * c.r + 0.7152 * c.g + 0.0722 * c.b;
    EXPECT_LT(lum, prev + 1e-12);
    prev = lum;
  }
}

TEST(Xml, Escaping) { EXPECT_EQ(xml_escape("<a&'\">"), "&lt;a&amp;&apos;&quot;&gt;"); }

TEST(Layout, BondLengthsAndRings) {
  for (const char* s : {"c1ccccc1", "CC12CC(C)(NC(=O)N1)NC(=O)N2", "c1ccc2ccccc2c1", "CCCCCC(=O)O",
                        "C1CC2CCC1%10CCCC%10C2"}) {
    const auto g = smiles::parse(s);
    const auto d = layout(g);
    ASSERT_EQ(d.coordinates.size(), g.atoms.size());
    for (const auto& b : g.bonds) {
      const double len = dist(d.coordinates[b.a], d.coordinates[b.b]);
      EXPECT_GT(len, 0.5) << s;
      EXPECT_LT(len, 1.6) << s;
    }
    for (std::size_t i = 0; i < g.atoms.size(); ++i)
      for (std::size_t j = i + 1; j < g.atoms.size(); ++j) EXPECT_GT(dist(d.coordinates[i], d.coordinates[j]), 0.3) << s;
  }
  EXPECT_EQ(find_rings(smiles::parse("c1ccc2ccccc2c1")).size(), 2u);
  const auto benzene = layout(smiles::parse("c1ccccc1"));
  Point c{0.0, 0.0};
  for (const auto& p : benzene.coordinates) c = {c.x + p.x / 6.0, c.y + p.y / 6.0};
  for (const auto& p : benzene.coordinates) EXPECT_NEAR(dist(p, c), 1.0, 1e-9);
}

TEST(Layout, IsDeterministic) {
  const auto g = smiles::parse("CC12CC(C)(NC(=O)N1)NC(=O)N2");
  const auto a = layout(g), b = layout(g);
  for (std::size_t i = 0; i < a.coordinates.size(); ++i) {
    EXPECT_EQ(a.coordinates[i].x, b.coordinates[i].x);
    EXPECT_EQ(a.coordinates[i].y, b.coordinates[i].y);
  }
}

TEST(Layout, LabelsForHeteroatoms) {
  const auto d = layout(smiles::parse("C[NH3+]c1ccccc1"));
  EXPECT_EQ(d.labels[1], "NH3+");
  EXPECT_EQ(d.labels[2], "C");
}

TEST(MoleculeSvg, WellFormedWithOneHighlightPerAtom) {
  const auto g = smiles::parse("CC12CC(C)(NC(=O)N1)NC(=O)N2");
  const auto svg = molecule_svg(layout(g), ramp_weights(g.atoms.size()));
  const auto tree = parse_svg(svg);
  EXPECT_EQ(count(tree, "circle", "highlight"), 13u);
  EXPECT_EQ(count(tree, "text", "atom-label"), 6u);
  EXPECT_NE(svg.find("#008000"), std::string::npos);
  EXPECT_NE(svg.find("relative importance"), std::string::npos);
}

TEST(MoleculeSvg, PairDrawsBothMolecules) {
  const Depiction d[] = {layout(smiles::parse("CCO")), layout(smiles::parse("O"))};
  const relevance::AtomRelevance r[] = {ramp_weights(3), ramp_weights(1)};
  const auto tree = parse_svg(molecule_svg(d, r));
  EXPECT_EQ(count(tree, "g", "molecule"), 2u);
  EXPECT_EQ(count(tree, "circle", "highlight"), 4u);
}

TEST(MoleculeSvg, MismatchedWeightsRejected) {
  EXPECT_THROW(molecule_svg(layout(smiles::parse("CCO")), ramp_weights(2)), InvalidInputError);
}

TEST(Layout, RejectsOversizedMolecules) {
  EXPECT_THROW(layout(smiles::parse(std::string(101, 'C'))), InvalidInputError);
}

TEST(Heatmaps, CellsLabelsAndSharedScale) {
  const auto ex = relevance::explain(fx::small_model(), "OCC(O)C=O");
  const auto labels = ex.tokens.texts();
  const auto figs = attention_heatmaps_svg(ex.averaged, ex.relevance, labels);
  const auto layers = parse_svg(figs.layers);
  EXPECT_EQ(count(layers, "rect", "cell"), 2u * 100u);
  EXPECT_EQ(count(layers, "g", "panel"), 2u);
  EXPECT_NE(figs.layers.find("&lt;REG&gt;"), std::string::npos);
  const auto rel = parse_svg(figs.relevance);
  EXPECT_EQ(count(rel, "rect", "cell"), 100u);
  EXPECT_NE(figs.relevance.find("R - I"), std::string::npos);
}

TEST(Parity, SlopeAndPoints) {
  const std::vector<double> t{0.0, 1.0, 2.0, 3.0};
  const std::vector<double> p{1.0, 3.0, 5.0, 7.0};
  EXPECT_DOUBLE_EQ(fit_slope(t, p), 2.0);
  const std::vector<double> flat{1.0, 1.0};
  EXPECT_EQ(fit_slope(flat, std::vector<double>{0.0, 5.0}), 0.0);
  const auto svg = parity_plot_svg(p, t, "test <set>");
  const auto tree = parse_svg(svg);
  EXPECT_EQ(count(tree, "circle", "point"), 4u);
  EXPECT_EQ(count(tree, "line", "diagonal"), 1u);
  EXPECT_EQ(count(tree, "line", "fit"), 1u);
  EXPECT_NE(svg.find("slope = 2.000, n = 4"), std::string::npos);
  EXPECT_THROW(parity_plot_svg(p, flat), InvalidInputError);
}

TEST(Layout, WholeDatasetStaysWithinGeometryBounds) {
  const auto recs =
      data::load_csv(std::string(CHEMREL_DATA) + "/huuskonen_solubility.csv", data::CsvSchema::aqueous()).records;
  for (const auto& r : recs) {
    const auto g = smiles::parse(r.solute);
    const auto d = layout(g);
    for (const auto& b : g.bonds) EXPECT_LT(dist(d.coordinates[b.a], d.coordinates[b.b]), 1.5) << r.solute;
    for (std::size_t i = 0; i < g.atoms.size(); ++i)
      for (std::size_t j = i + 1; j < g.atoms.size(); ++j)
        EXPECT_GT(dist(d.coordinates[i], d.coordinates[j]), 0.5) << r.solute;
  }
}
