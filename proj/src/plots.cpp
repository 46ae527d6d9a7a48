#include "mra/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "mra/errors.hpp"
#include "mra/metrics.hpp"

namespace mra {

std::string to_string(PlotKind k) {
  switch (k) {
    case PlotKind::returns: return "returns";
    case PlotKind::mi: return "mi";
    case PlotKind::aux_loss: return "aux_loss";
    case PlotKind::trajectories: return "trajectories";
  }
  return "?";
}

PlotKind parse_plot_kind(const std::string& name) {
  if (name == "returns") return PlotKind::returns;
  if (name == "mi") return PlotKind::mi;
  if (name == "aux_loss") return PlotKind::aux_loss;
  if (name == "trajectories") return PlotKind::trajectories;
  throw ParameterError("unknown plot kind '" + name + "'");
}

namespace {

constexpr double kWidth = 640, kHeight = 400, kMargin = 50;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kMargin + (x1 > x0 ? (x - x0) / (x1 - x0) : 0.5) * (kWidth - 2 * kMargin); }
  double py(double y) const {
    return kHeight - kMargin - (y1 > y0 ? (y - y0) / (y1 - y0) : 0.5) * (kHeight - 2 * kMargin);
  }
};

void header(std::ostringstream& s, const std::string& title) {
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" viewBox=\"0 0 "
    << kWidth << ' ' << kHeight << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
    << title << "</text>\n";
}

void axes(std::ostringstream& s, const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  const double l = kMargin, r = kWidth - kMargin, t = kMargin, b = kHeight - kMargin;
  s << "<line x1=\"" << l << "\" y1=\"" << b << "\" x2=\"" << r << "\" y2=\"" << b << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << l << "\" y1=\"" << t << "\" x2=\"" << l << "\" y2=\"" << b << "\" stroke=\"black\"/>\n";
  auto label = [&](double x, double y, const std::string& text, const char* anchor) {
    s << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" text-anchor=\"" << anchor
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << text << "</text>\n";
  };
  label(l, b + 15, num(f.x0), "middle");
  label(r, b + 15, num(f.x1), "middle");
  label(l - 5, b, num(f.y0), "end");
  label(l - 5, t + 4, num(f.y1), "end");
  label((l + r) / 2, kHeight - 10, xlabel, "middle");
  label(12, (t + b) / 2, ylabel, "start");
}

struct Series {
  std::string name;
  std::vector<std::vector<double>> per_run;  // values by per-game episode position
};

}  // namespace

std::string render_curves_svg(const std::vector<std::vector<EpisodeRecord>>& runs, PlotKind kind) {
  if (kind == PlotKind::trajectories) throw ContractError("render_curves_svg: trajectories need a trajectory dump");
  std::size_t total = 0;
  for (const auto& r : runs) total += r.size();
  if (runs.empty() || total == 0) throw ContractError("render_curves_svg: empty metrics");

  std::map<std::pair<int, int>, Series> series;  // (game, role)
  for (std::size_t k = 0; k < runs.size(); ++k)
    for (const auto& rec : runs[k]) {
      std::vector<std::pair<int, double>> values;
      if (kind == PlotKind::returns) {
        for (std::size_t r = 0; r < rec.role_returns.size(); ++r) values.emplace_back(static_cast<int>(r), rec.role_returns[r]);
      } else {
        const auto& v = kind == PlotKind::mi ? rec.mi_bound : rec.aux_loss;
        if (v) values.emplace_back(0, *v);
      }
      for (const auto& [role, v] : values) {
        Series& s = series[{rec.game_id, role}];
        if (s.name.empty())
          s.name = "game " + std::to_string(rec.game_id) + (kind == PlotKind::returns ? " role " + std::to_string(role) : "");
        s.per_run.resize(runs.size());
        s.per_run[k].push_back(v);
      }
    }
  if (series.empty()) throw ContractError("render_curves_svg: no values of the requested kind");

  struct Curve {
    std::string name;
    std::vector<double> mean, lo, hi;
    int runs = 0;
  };
  std::vector<Curve> curves;
  Frame f{0, 0, INFINITY, -INFINITY};
  for (const auto& [key, s] : series) {
    Curve c{s.name, {}, {}, {}, 0};
    std::size_t len = 0;
    for (const auto& v : s.per_run) {
      len = std::max(len, v.size());
      if (!v.empty()) ++c.runs;
    }
    for (std::size_t i = 0; i < len; ++i) {
      double sum = 0, lo = INFINITY, hi = -INFINITY;
      int n = 0;
      for (const auto& v : s.per_run)
        if (i < v.size()) {
          sum += v[i];
          lo = std::min(lo, v[i]);
          hi = std::max(hi, v[i]);
          ++n;
        }
      c.mean.push_back(sum / n);
      c.lo.push_back(lo);
      c.hi.push_back(hi);
      f.y0 = std::min(f.y0, lo);
      f.y1 = std::max(f.y1, hi);
    }
    f.x1 = std::max(f.x1, static_cast<double>(len - 1));
    curves.push_back(std::move(c));
  }

  const std::string ylabel = kind == PlotKind::returns ? "episode return" : kind == PlotKind::mi ? "mi_bound" : "aux_loss";
  std::ostringstream s;
  header(s, ylabel + " vs episode");
  axes(s, f, "episode (per game)", ylabel);
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const Curve& cv = curves[c];
    const char* color = kPalette[c % (sizeof kPalette / sizeof kPalette[0])];
    if (cv.runs >= 2) {
      s << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < cv.hi.size(); ++i) s << num(f.px(static_cast<double>(i))) << ',' << num(f.py(cv.hi[i])) << ' ';
      for (std::size_t i = cv.lo.size(); i-- > 0;) s << num(f.px(static_cast<double>(i))) << ',' << num(f.py(cv.lo[i])) << ' ';
      s << "\"/>\n";
    }
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < cv.mean.size(); ++i)
      s << (i ? " " : "") << num(f.px(static_cast<double>(i))) << ',' << num(f.py(cv.mean[i]));
    s << "\"/>\n";
    s << "<text x=\"" << num(kWidth - kMargin + 2) << "\" y=\"" << num(kMargin + 14.0 * static_cast<double>(c))
      << "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"" << color << "\">" << cv.name << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

nlohmann::json trajectory_dump(const std::vector<TrajectoryStep>& steps) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& st : steps) {
    nlohmann::json pos = nlohmann::json::array(), lm = nlohmann::json::array();
    for (const auto& p : st.pos) pos.push_back({p[0], p[1]});
    for (const auto& p : st.landmarks) lm.push_back({p[0], p[1]});
    arr.push_back({{"pos", pos}, {"landmarks", lm}, {"actions", st.actions}, {"rewards", st.rewards}});
  }
  return {{"steps", arr}};
}

std::string render_trajectory_svg(const nlohmann::json& dump) {
  const auto& steps = dump.at("steps");
  if (!steps.is_array() || steps.empty()) throw ContractError("render_trajectory_svg: empty trajectory");
  const std::size_t agents = steps[0].at("pos").size();
  Frame f{INFINITY, -INFINITY, INFINITY, -INFINITY};
  auto extend = [&](const nlohmann::json& p) {
    const double x = p[0].get<double>(), y = p[1].get<double>();
    f.x0 = std::min(f.x0, x);
    f.x1 = std::max(f.x1, x);
    f.y0 = std::min(f.y0, y);
    f.y1 = std::max(f.y1, y);
  };
  for (const auto& st : steps) {
    for (const auto& p : st.at("pos")) extend(p);
    for (const auto& p : st.at("landmarks")) extend(p);
  }
  std::ostringstream s;
  header(s, "trajectories");
  axes(s, f, "x", "y");
  for (const auto& p : steps.back().at("landmarks"))
    s << "<circle cx=\"" << num(f.px(p[0].get<double>())) << "\" cy=\"" << num(f.py(p[1].get<double>()))
      << "\" r=\"5\" fill=\"gray\"/>\n";
  for (std::size_t a = 0; a < agents; ++a) {
    const char* color = kPalette[a % (sizeof kPalette / sizeof kPalette[0])];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const auto& p = steps[t].at("pos").at(a);
      s << (t ? " " : "") << num(f.px(p[0].get<double>())) << ',' << num(f.py(p[1].get<double>()));
    }
    s << "\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void emit_plot(const std::vector<std::filesystem::path>& inputs, PlotKind kind, const std::filesystem::path& out) {
  if (inputs.empty()) throw ContractError("emit_plot: no input files");
  std::string svg;
  if (kind == PlotKind::trajectories) {
    std::ifstream in(inputs.front());
    if (!in) throw std::runtime_error("cannot open " + inputs.front().string());
    svg = render_trajectory_svg(nlohmann::json::parse(in));
  } else {
    std::vector<std::vector<EpisodeRecord>> runs;
    for (const auto& p : inputs) runs.push_back(read_metrics(p));
    svg = render_curves_svg(runs, kind);
  }
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  std::ofstream(out, std::ios::binary) << svg;
}

}  // namespace mra
