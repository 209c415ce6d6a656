#include "dpsim/hydro/database.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

namespace dpsim::hydro
{

namespace
{

struct Section
{
  std::vector<double> values;
  std::vector<std::size_t> lines;  // source line per value, for diagnostics
  std::size_t header_line{0};
};

void check_symmetric(const Matrix6 & m, const std::string & name)
{
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  for (int i = 0; i < 6; ++i) {
    for (int j = i + 1; j < 6; ++j) {
      if (std::abs(m(i, j) - m(j, i)) > 1e-9 * scale) {
        throw DatabaseFormatError(fmt::format(
          "{} is not symmetric: entry ({},{}) = {:.9g} but ({},{}) = {:.9g}", name, i + 1,
          j + 1, m(i, j), j + 1, i + 1, m(j, i)));
      }
    }
  }
}

Matrix6 read_matrix(const std::vector<double> & v, std::size_t offset)
{
  Matrix6 m;
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      m(i, j) = v[offset + static_cast<std::size_t>(i * 6 + j)];
    }
  }
  return m;
}

void write_matrix(std::ostream & out, const Matrix6 & m)
{
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      out << fmt::format("{:.17g}", m(i, j)) << (j == 5 ? '\n' : ' ');
    }
  }
}

}  // namespace

void check_frequency_grid(const std::vector<double> & freq)
{
  if (freq.size() < kMinFrequencyPoints) {
    throw InsufficientFrequencyGrid(fmt::format(
      "{} frequency points, at least {} required", freq.size(), kMinFrequencyPoints));
  }
  for (std::size_t i = 0; i < freq.size(); ++i) {
    if (!(freq[i] > 0.0) || !std::isfinite(freq[i])) {
      throw InsufficientFrequencyGrid(fmt::format("frequency #{} = {} is not positive", i, freq[i]));
    }
    if (i > 0 && !(freq[i] > freq[i - 1])) {
      throw InsufficientFrequencyGrid(
        fmt::format("frequency grid not strictly ascending at #{} ({} after {})", i, freq[i], freq[i - 1]));
    }
  }
}

void HydroDatabase::validate() const
{
  try {
    check_frequency_grid(freq);
  } catch (const InsufficientFrequencyGrid & e) {
    throw DatabaseFormatError(e.what());
  }
  if (added_mass.size() != freq.size() || damping.size() != freq.size()) {
    throw DatabaseFormatError(fmt::format(
      "expected {} A and B matrices, got {} and {}", freq.size(), added_mass.size(), damping.size()));
  }
  check_symmetric(rigid_mass, "M_RB");
  check_symmetric(restoring, "C");
  if (Eigen::LLT<Matrix6>(rigid_mass).info() != Eigen::Success) {
    throw DatabaseFormatError("M_RB is not positive definite");
  }
  for (std::size_t k = 0; k < freq.size(); ++k) {
    check_symmetric(damping[k], fmt::format("B at f = {} Hz", freq[k]));
    const Eigen::SelfAdjointEigenSolver<Matrix6> es(damping[k], Eigen::EigenvaluesOnly);
    const double scale = std::max(1.0, damping[k].cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() < -1e-9 * scale) {
      throw DatabaseFormatError(
        fmt::format("B at f = {} Hz is not positive semidefinite (eigenvalue {:.6g})", freq[k],
                    es.eigenvalues().minCoeff()));
    }
  }
  if (has_rao()) {
    for (std::size_t i = 0; i < rao_directions.size(); ++i) {
      const double d = rao_directions[i];
      if (d < 0.0 || d >= 2.0 * kPi || (i > 0 && !(d > rao_directions[i - 1]))) {
        throw DatabaseFormatError("RAO directions must be strictly ascending within [0, 360) deg");
      }
    }
    if (rao.size() != freq.size() * rao_directions.size()) {
      throw DatabaseFormatError("RAO table does not cover every (frequency, direction) pair");
    }
  }
}

HydroDatabase parse_database(std::istream & in)
{
  std::map<std::string, Section> sections;
  std::vector<std::vector<double>> rao_rows;
  std::vector<std::size_t> rao_lines;

  std::string current;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
      continue;
    }
    if (line[first] == '[') {
      const auto close = line.find(']', first);
      if (close == std::string::npos) {
        throw DatabaseFormatError(fmt::format("line {}: unterminated section header", lineno));
      }
      current = line.substr(first + 1, close - first - 1);
      static const char * known[] = {"FREQ", "A", "B", "C", "M_RB", "RAO"};
      if (std::find(std::begin(known), std::end(known), current) == std::end(known)) {
        throw DatabaseFormatError(fmt::format("line {}: unknown section [{}]", lineno, current));
      }
      if (sections.count(current) != 0u) {
        throw DatabaseFormatError(fmt::format("line {}: duplicate section [{}]", lineno, current));
      }
      sections[current].header_line = lineno;
      continue;
    }
    if (current.empty()) {
      throw DatabaseFormatError(fmt::format("line {}: data outside of any section", lineno));
    }
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) {
          throw std::invalid_argument(tok);
        }
      } catch (const std::exception &) {
        throw DatabaseFormatError(fmt::format("line {}: '{}' is not a number", lineno, tok));
      }
    }
    if (current == "RAO") {
      if (row.size() != 14) {
        throw DatabaseFormatError(fmt::format(
          "line {}: RAO rows need 14 values (f, dir, 6 x amplitude/phase), got {}", lineno, row.size()));
      }
      rao_rows.push_back(std::move(row));
      rao_lines.push_back(lineno);
    } else {
      auto & s = sections[current];
      for (double v : row) {
        s.values.push_back(v);
        s.lines.push_back(lineno);
      }
    }
  }

  for (const char * required : {"FREQ", "A", "B", "C", "M_RB"}) {
    if (sections.count(required) == 0u) {
      throw DatabaseFormatError(fmt::format("missing section [{}]", required));
    }
  }

  HydroDatabase db;
  db.freq = sections["FREQ"].values;
  try {
    check_frequency_grid(db.freq);
  } catch (const InsufficientFrequencyGrid & e) {
    throw DatabaseFormatError(fmt::format("[FREQ] (line {}): {}", sections["FREQ"].header_line, e.what()));
  }
  const std::size_t nf = db.freq.size();

  for (const char * per_freq : {"A", "B"}) {
    const auto & s = sections[per_freq];
    if (s.values.size() != nf * 36) {
      throw DatabaseFormatError(fmt::format(
        "[{}] (line {}) needs {} values (6x6 per frequency), got {}", per_freq, s.header_line,
        nf * 36, s.values.size()));
    }
    auto & dst = std::string(per_freq) == "A" ? db.added_mass : db.damping;
    for (std::size_t k = 0; k < nf; ++k) {
      dst.push_back(read_matrix(s.values, k * 36));
    }
  }
  for (const char * single : {"C", "M_RB"}) {
    const auto & s = sections[single];
    if (s.values.size() != 36) {
      throw DatabaseFormatError(fmt::format(
        "[{}] (line {}) needs 36 values, got {}", single, s.header_line, s.values.size()));
    }
  }
  db.restoring = read_matrix(sections["C"].values, 0);
  db.rigid_mass = read_matrix(sections["M_RB"].values, 0);

  if (!rao_rows.empty()) {
    std::vector<double> dirs;
    for (const auto & r : rao_rows) {
      const double d = deg2rad(r[1]);
      if (std::find(dirs.begin(), dirs.end(), d) == dirs.end()) {
        dirs.push_back(d);
      }
    }
    std::sort(dirs.begin(), dirs.end());
    db.rao_directions = dirs;
    db.rao.assign(nf * dirs.size(), ComplexVector6::Zero());
    std::vector<bool> seen(db.rao.size(), false);
    for (std::size_t k = 0; k < rao_rows.size(); ++k) {
      const auto & r = rao_rows[k];
      const auto fit = std::find_if(db.freq.begin(), db.freq.end(), [&](double f) {
        return std::abs(f - r[0]) <= 1e-9 * std::max(1.0, f);
      });
      if (fit == db.freq.end()) {
        throw DatabaseFormatError(
          fmt::format("line {}: RAO frequency {} is not on the [FREQ] grid", rao_lines[k], r[0]));
      }
      const auto fi = static_cast<std::size_t>(fit - db.freq.begin());
      const auto di = static_cast<std::size_t>(
        std::find(dirs.begin(), dirs.end(), deg2rad(r[1])) - dirs.begin());
      const std::size_t idx = fi * dirs.size() + di;
      if (seen[idx]) {
        throw DatabaseFormatError(fmt::format("line {}: duplicate RAO entry", rao_lines[k]));
      }
      seen[idx] = true;
      for (int dof = 0; dof < 6; ++dof) {
        db.rao[idx](dof) = std::polar(r[2 + 2 * dof], r[3 + 2 * dof]);
      }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
      throw DatabaseFormatError("[RAO] does not cover every (frequency, direction) pair");
    }
  }

  db.validate();
  return db;
}

HydroDatabase load_database(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) {
    throw DatabaseFormatError(fmt::format("cannot open '{}'", path.string()));
  }
  return parse_database(in);
}

void write_database(std::ostream & out, const HydroDatabase & db)
{
  out << "# hydrodynamic database: SI units, matrices row-major\n";
  out << "[FREQ]\n";
  for (double f : db.freq) {
    out << fmt::format("{:.17g}\n", f);
  }
  out << "[A]\n";
  for (std::size_t k = 0; k < db.size(); ++k) {
    out << fmt::format("# f = {:.6g} Hz\n", db.freq[k]);
    write_matrix(out, db.added_mass[k]);
  }
  out << "[B]\n";
  for (std::size_t k = 0; k < db.size(); ++k) {
    out << fmt::format("# f = {:.6g} Hz\n", db.freq[k]);
    write_matrix(out, db.damping[k]);
  }
  out << "[C]\n";
  write_matrix(out, db.restoring);
  out << "[M_RB]\n";
  write_matrix(out, db.rigid_mass);
  if (db.has_rao()) {
    out << "[RAO]\n# f_Hz dir_deg then amplitude phase_rad for each of the 6 DOF\n";
    for (std::size_t fi = 0; fi < db.size(); ++fi) {
      for (std::size_t di = 0; di < db.rao_directions.size(); ++di) {
        out << fmt::format("{:.17g} {:.17g}", db.freq[fi], rad2deg(db.rao_directions[di]));
        const auto & x = db.rao_at(fi, di);
        for (int dof = 0; dof < 6; ++dof) {
          out << fmt::format(" {:.17g} {:.17g}", std::abs(x(dof)), std::arg(x(dof)));
        }
        out << '\n';
      }
    }
  }
}

void save_database(const std::filesystem::path & path, const HydroDatabase & db)
{
  std::ofstream out(path);
  if (!out) {
    throw DatabaseFormatError(fmt::format("cannot write '{}'", path.string()));
  }
  write_database(out, db);
}

}  // namespace dpsim::hydro
