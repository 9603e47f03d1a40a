#include "sparseproj/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace sparseproj {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

bool parse_double(const std::string& s, double* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return false;
  *out = v;
  return true;
}

std::vector<std::vector<double>> read_csv_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  bool first_data = true;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::vector<std::string> fields = split_csv(t);
    std::vector<double> vals(fields.size());
    bool ok = true;
    for (std::size_t i = 0; i < fields.size(); ++i)
      if (!parse_double(fields[i], &vals[i])) {
        ok = false;
        break;
      }
    if (!ok) {
      if (first_data) {  // header row
        first_data = false;
        continue;
      }
      throw IoError(path + ":" + std::to_string(lineno) + ": non-numeric field");
    }
    first_data = false;
    if (!rows.empty() && vals.size() != rows.front().size())
      throw IoError(path + ":" + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw IoError(path + ": no data rows");
  return rows;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  // %.17g always round-trips; prefer the shortest representation that does.
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  const auto rows = read_csv_rows(path);
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

Eigen::VectorXd read_vector_csv(const std::string& path) {
  const auto rows = read_csv_rows(path);
  if (rows.front().size() != 1)
    throw IoError(path + ": expected a single column, got " +
                  std::to_string(rows.front().size()));
  Eigen::VectorXd v(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) v[i] = rows[i][0];
  return v;
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& comments,
                      const std::vector<std::string>& col_names) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& c : comments) out << "# " << c << "\n";
  if (!col_names.empty()) {
    for (std::size_t j = 0; j < col_names.size(); ++j)
      out << (j ? "," : "") << col_names[j];
    out << "\n";
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      out << (j ? "," : "") << format_double(m(i, j));
    out << "\n";
  }
  if (!out) throw IoError("failed writing " + path);
}

GroupSpec read_groups_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  GroupSpec spec;
  if (j.contains("groups")) {
    if (!j["groups"].is_array()) throw IoError(path + ": \"groups\" must be an array");
    for (const auto& g : j["groups"]) {
      if (!g.is_array()) throw IoError(path + ": each group must be an array");
      std::vector<int> cols;
      for (const auto& c : g) {
        if (!c.is_number_integer()) throw IoError(path + ": column ids must be integers");
        cols.push_back(c.get<int>() - 1);  // file is 1-based
      }
      spec.groups.push_back(std::move(cols));
    }
  } else if (j.contains("sizes")) {
    if (!j["sizes"].is_array()) throw IoError(path + ": \"sizes\" must be an array");
    std::vector<int> sizes;
    for (const auto& s : j["sizes"]) {
      if (!s.is_number_integer() || s.get<int>() <= 0)
        throw IoError(path + ": sizes must be positive integers");
      sizes.push_back(s.get<int>());
    }
    spec = GroupSpec::contiguous(sizes);
  } else {
    throw IoError(path + ": expected a \"groups\" or \"sizes\" key");
  }
  return spec;
}

void write_groups_json(const std::string& path, const GroupSpec& spec) {
  nlohmann::json j;
  j["groups"] = nlohmann::json::array();
  for (const auto& g : spec.groups) {
    nlohmann::json arr = nlohmann::json::array();
    for (int c : g) arr.push_back(c + 1);
    j["groups"].push_back(arr);
  }
  write_text_file(path, j.dump(2) + "\n");
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace sparseproj
