// SPDX-License-Identifier: Apache-2.0
#include "xtcdr/data/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "xtcdr/error.hpp"
#include "xtcdr/io.hpp"

namespace xtcdr::data {

namespace {

constexpr std::array<const char*, 4> kMetaColumns = {"cell_id", "cell_line", "perturbation", "dose"};

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

template <class F>
bool parse_number(std::string_view field, F& out) {
    if (!field.empty() && field.front() == '+') field.remove_prefix(1);
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end && !field.empty();
}

[[noreturn]] void parse_fail(const std::string& source, std::size_t line, const std::string& why) {
    fail(ErrorKind::Parse, source + ":" + std::to_string(line) + ": " + why);
}

}  // namespace

ExpressionDataset::ExpressionDataset(std::vector<std::string> gene_ids) : gene_ids_(std::move(gene_ids)) {
    std::unordered_set<std::string> seen;
    for (const auto& g : gene_ids_)
        if (!seen.insert(g).second) fail(ErrorKind::Schema, "duplicate gene id '" + g + "'");
}

void ExpressionDataset::add_row(CellMeta meta, std::span<const float> values) {
    if (values.size() != gene_count())
        fail(ErrorKind::Shape, "row '" + meta.cell_id + "' has " + std::to_string(values.size()) +
                                   " values, expected " + std::to_string(gene_count()));
    meta_.push_back(std::move(meta));
    values_.insert(values_.end(), values.begin(), values.end());
}

ExpressionDataset ExpressionDataset::subset(const std::vector<std::size_t>& indices) const {
    ExpressionDataset out;
    out.gene_ids_ = gene_ids_;
    out.meta_.reserve(indices.size());
    out.values_.reserve(indices.size() * gene_count());
    for (std::size_t r : indices) out.add_row(meta_.at(r), values(r));
    return out;
}

std::vector<std::string> ExpressionDataset::perturbations() const {
    std::set<std::string> s;
    for (const auto& m : meta_)
        if (!m.is_control()) s.insert(m.perturbation);
    return {s.begin(), s.end()};
}

std::vector<std::string> ExpressionDataset::cell_lines() const {
    std::set<std::string> s;
    for (const auto& m : meta_) s.insert(m.cell_line);
    return {s.begin(), s.end()};
}

std::vector<std::size_t> ExpressionDataset::rows_where(const std::string& perturbation,
                                                       const std::string& cell_line) const {
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < meta_.size(); ++r)
        if (meta_[r].perturbation == perturbation && (cell_line.empty() || meta_[r].cell_line == cell_line))
            out.push_back(r);
    return out;
}

ExpressionDataset parse_dataset(std::istream& in, const std::string& source, LoadOptions options) {
    std::string line;
    if (!std::getline(in, line)) parse_fail(source, 1, "empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_tabs(line);
    if (header.size() < kMetaColumns.size() + 1) parse_fail(source, 1, "header has no gene columns");
    for (std::size_t i = 0; i < kMetaColumns.size(); ++i)
        if (header[i] != kMetaColumns[i])
            parse_fail(source, 1, "expected column '" + std::string(kMetaColumns[i]) + "', found '" +
                                      std::string(header[i]) + "'");
    std::vector<std::string> genes;
    for (std::size_t i = kMetaColumns.size(); i < header.size(); ++i) genes.emplace_back(header[i]);
    ExpressionDataset ds(std::move(genes));
    const std::size_t width = header.size();

    std::vector<float> values(ds.gene_count());
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        if (fields.size() != width)
            parse_fail(source, lineno, "expected " + std::to_string(width) + " fields, found " +
                                           std::to_string(fields.size()));
        CellMeta meta{std::string(fields[0]), std::string(fields[1]), std::string(fields[2]), 0.0};
        if (!parse_number(fields[3], meta.dose))
            parse_fail(source, lineno, "non-numeric dose '" + std::string(fields[3]) + "'");
        for (std::size_t g = 0; g < values.size(); ++g) {
            const auto f = fields[kMetaColumns.size() + g];
            if (!parse_number(f, values[g]) || !std::isfinite(values[g]))
                parse_fail(source, lineno, "non-numeric value '" + std::string(f) + "' for gene '" +
                                               ds.gene_ids()[g] + "'");
            if (options.log1p) values[g] = std::log1p(values[g]);
        }
        ds.add_row(std::move(meta), values);
    }
    return ds;
}

ExpressionDataset load_dataset(const std::filesystem::path& path, LoadOptions options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open dataset " + path.string());
    return parse_dataset(in, path.string(), options);
}

void write_dataset(const ExpressionDataset& ds, std::ostream& out) {
    out << "cell_id\tcell_line\tperturbation\tdose";
    for (const auto& g : ds.gene_ids()) out << '\t' << g;
    out << '\n';
    char buf[64];
    for (std::size_t r = 0; r < ds.row_count(); ++r) {
        const auto& m = ds.meta(r);
        out << m.cell_id << '\t' << m.cell_line << '\t' << m.perturbation << '\t';
        auto res = std::to_chars(buf, buf + sizeof buf, m.dose);
        out.write(buf, res.ptr - buf);
        for (float v : ds.values(r)) {
            out << '\t';
            res = std::to_chars(buf, buf + sizeof buf, v);
            out.write(buf, res.ptr - buf);
        }
        out << '\n';
    }
}

void save_dataset(const ExpressionDataset& ds, const std::filesystem::path& path) {
    std::ostringstream os;
    write_dataset(ds, os);
    io::write_file_atomic(path, os.str());
}

ExpressionDataset filter_dose(const ExpressionDataset& ds, double dose) {
    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < ds.row_count(); ++r)
        if (ds.meta(r).is_control() || std::abs(ds.meta(r).dose - dose) <= 1e-9) keep.push_back(r);
    return ds.subset(keep);
}

std::vector<float> mean_profile(const ExpressionDataset& ds, const std::vector<std::size_t>& rows) {
    if (rows.empty()) fail(ErrorKind::Data, "mean of an empty row group");
    std::vector<double> acc(ds.gene_count(), 0.0);
    for (std::size_t r : rows) {
        const auto v = ds.values(r);
        for (std::size_t g = 0; g < acc.size(); ++g) acc[g] += v[g];
    }
    std::vector<float> out(acc.size());
    for (std::size_t g = 0; g < acc.size(); ++g) out[g] = float(acc[g] / double(rows.size()));
    return out;
}

std::vector<float> control_profile(const ExpressionDataset& ds, const std::string& cell_line) {
    const auto rows = ds.rows_where(kControlLabel, cell_line);
    if (rows.empty()) fail(ErrorKind::Data, "no control rows for cell line '" + cell_line + "'");
    return mean_profile(ds, rows);
}

std::string combo_label(const std::string& a, const std::string& b) {
    return a < b ? a + "+" + b : b + "+" + a;
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t h) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t dataset_digest(const ExpressionDataset& ds) {
    std::ostringstream os;
    write_dataset(ds, os);
    const std::string s = os.str();
    return fnv1a64({reinterpret_cast<const unsigned char*>(s.data()), s.size()});
}

}  // namespace xtcdr::data
