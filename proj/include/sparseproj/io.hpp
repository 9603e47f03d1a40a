#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>
#include <Eigen/Core>

#include "sparseproj/grouped_design.hpp"

namespace sparseproj {

// File and parse problems, kept distinct from config errors for exit codes.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shortest exact decimal representation (round-trips through strtod).
std::string format_double(double v);

// Numeric CSV. Lines starting with '#' and blank lines are skipped; a leading
// non-numeric row is treated as a header. All data rows must have the same
// number of comma-separated fields.
Eigen::MatrixXd read_matrix_csv(const std::string& path);

// Single-column CSV, same conventions.
Eigen::VectorXd read_vector_csv(const std::string& path);

// Writes comment lines (each prefixed "# "), an optional header row, then the
// data with exact round-trip formatting.
void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& comments,
                      const std::vector<std::string>& col_names = {});

// Group spec as {"groups": [[...1-based column ids...], ...]} or
// {"sizes": [s1, s2, ...]} for contiguous blocks. "groups" wins if both given.
GroupSpec read_groups_json(const std::string& path);
void write_groups_json(const std::string& path, const GroupSpec& spec);

// FNV-1a fingerprint, used to stamp artifacts with their generating config.
std::uint64_t fnv1a64(const std::string& s);
std::string hex64(std::uint64_t v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace sparseproj
