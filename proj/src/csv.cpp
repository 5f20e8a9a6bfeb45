#include "assign_surrogate/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "assign_surrogate/error.hpp"

namespace surrogate::csv {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    return s;
}

}  // namespace

std::size_t Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw LoadError(source + ": missing column '" + std::string(name) + "'");
}

std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

Table read(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError(path.string() + ": cannot open file");
    Table t;
    t.source = path.string();
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        const auto body = trim(line);
        if (body.empty()) continue;
        auto fields = split(body, ',');
        if (!have_header) {
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw LoadError(t.source + ": row " + std::to_string(t.rows.size() + 1) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(fields));
    }
    if (!have_header) throw LoadError(t.source + ": empty file (header row required)");
    return t;
}

long long to_int(std::string_view s, const std::string& source) {
    long long v = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) {
        throw LoadError(source + ": not an integer: '" + std::string(s) + "'");
    }
    return v;
}

double to_double(std::string_view s, const std::string& source) {
    double v = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) {
        throw LoadError(source + ": not a number: '" + std::string(s) + "'");
    }
    return v;
}

std::string format(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

IntMatrix read_int_matrix(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError(path.string() + ": cannot open file");
    const std::string source = path.string();
    std::vector<std::vector<std::int64_t>> rows;
    std::string line;
    while (std::getline(in, line)) {
        const auto body = trim(line);
        if (body.empty()) continue;
        std::vector<std::int64_t> r;
        for (const auto& f : split(body, ',')) r.push_back(to_int(f, source));
        if (!rows.empty() && r.size() != rows.front().size()) {
            throw LoadError(source + ": ragged matrix at row " + std::to_string(rows.size() + 1));
        }
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw LoadError(source + ": empty matrix file");
    IntMatrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    }
    return m;
}

void write_int_matrix(const fs::path& path, const IntMatrix& m) {
    std::ostringstream out;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << m(i, j);
        }
        out << '\n';
    }
    write_text(path, out.str());
}

void write_text(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure(path.string() + ": cannot open for writing");
    out << content;
    if (!out) throw RuntimeFailure(path.string() + ": write failed");
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError(path.string() + ": cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace surrogate::csv
