#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "assign_surrogate/matrix.hpp"

namespace surrogate::csv {

/// A parsed CSV file: header plus data rows. Every row has the header's width.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index by name; throws LoadError naming `source` if absent.
    std::size_t column(std::string_view name) const;
    std::string source;
};

std::vector<std::string> split(std::string_view line, char sep);

/// Reads a headed CSV. Missing file, empty file or ragged rows raise LoadError
/// with the file name.
Table read(const std::filesystem::path& path);

/// Headerless integer/real matrix files (Q.csv, A.csv).
IntMatrix read_int_matrix(const std::filesystem::path& path);
void write_int_matrix(const std::filesystem::path& path, const IntMatrix& m);

long long to_int(std::string_view s, const std::string& source);
double to_double(std::string_view s, const std::string& source);

/// Shortest decimal form that round-trips to the same double.
std::string format(double v);

/// Writes `content` to `path` (creating parent directories).
void write_text(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

}  // namespace surrogate::csv
