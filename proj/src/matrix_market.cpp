#include "klnmf/matrix_market.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

namespace klnmf {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Tokenizer over one line. std::from_chars keeps parsing locale independent.
class Fields {
 public:
  explicit Fields(const std::string& line) : text_(line) {}

  template <typename T>
  bool next(T& out) {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ >= text_.size()) return false;
    const char* first = text_.data() + pos_;
    const char* last = text_.data() + text_.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || (ptr != last && !std::isspace(static_cast<unsigned char>(*ptr))))
      return false;
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    return true;
  }

  bool at_end() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return pos_ >= text_.size();
  }

 private:
  const std::string& text_;
  std::size_t pos_ = 0;
};

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

SparseMatrixd read_matrix_market(std::istream& in) {
  std::string line;
  long line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty input", 0);
  ++line_no;

  std::istringstream banner(line);
  std::string tag, object, format, field, symmetry;
  banner >> tag >> object >> format >> field >> symmetry;
  if (tag != "%%MatrixMarket") throw ParseError("missing %%MatrixMarket banner", line_no);
  if (lower(object) != "matrix") throw ParseError("object must be 'matrix'", line_no);
  if (lower(format) != "coordinate") throw ParseError("only coordinate format is supported", line_no);
  field = lower(field);
  if (field != "real" && field != "integer" && field != "double")
    throw ParseError("field must be real or integer, got '" + field + "'", line_no);
  if (lower(symmetry) != "general")
    throw ParseError("only general symmetry is supported, got '" + symmetry + "'", line_no);

  bool have_size = false;
  while (!have_size && std::getline(in, line)) {
    ++line_no;
    have_size = !(!line.empty() && line[0] == '%') && !blank(line);
  }
  if (!have_size) throw ParseError("missing size line", line_no);

  Index n_rows = 0, n_cols = 0, nnz = 0;
  {
    Fields f(line);
    if (!f.next(n_rows) || !f.next(n_cols) || !f.next(nnz) || !f.at_end())
      throw ParseError("size line must be 'rows cols nnz'", line_no);
    if (n_rows < 0 || n_cols < 0 || nnz < 0) throw ParseError("negative size", line_no);
  }

  std::vector<Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(nnz));
  while (static_cast<Index>(entries.size()) < nnz && std::getline(in, line)) {
    ++line_no;
    if (blank(line) || line[0] == '%') continue;
    Fields f(line);
    Index i = 0, j = 0;
    double v = 0.0;
    if (!f.next(i) || !f.next(j) || !f.next(v) || !f.at_end())
      throw ParseError("entry must be 'row col value'", line_no);
    if (i < 1 || i > n_rows || j < 1 || j > n_cols)
      throw ParseError("index (" + std::to_string(i) + "," + std::to_string(j) + ") out of range",
                       line_no);
    if (v < 0.0) throw std::domain_error("line " + std::to_string(line_no) + ": negative entry");
    entries.push_back({i - 1, j - 1, v});
  }
  if (static_cast<Index>(entries.size()) != nnz)
    throw ParseError("expected " + std::to_string(nnz) + " entries, found " +
                         std::to_string(entries.size()),
                     line_no);
  return SparseMatrixd::from_triplets(n_rows, n_cols, std::move(entries));
}

SparseMatrixd load_matrix_market(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_matrix_market(in);
}

namespace {

void write_double(std::ostream& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, ptr - buf);
}

}  // namespace

void write_matrix_market(std::ostream& out, const SparseMatrixd& m) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << m.rows() << ' ' << m.cols() << ' ' << m.nnz() << '\n';
  for (Index j = 0; j < m.cols(); ++j) {
    const auto col = m.column(j);
    for (std::size_t p = 0; p < col.nnz(); ++p) {
      out << col.indices[p] + 1 << ' ' << j + 1 << ' ';
      write_double(out, col.values[p]);
      out << '\n';
    }
  }
}

void save_matrix_market(const std::filesystem::path& path, const SparseMatrixd& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_matrix_market(out, m);
}

void write_matrix_market(std::ostream& out, const DenseFactord& factor, const std::string& name) {
  const auto nnz = (factor.array() != 0.0).count();
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << "% " << name << ": rows are latent components (r), columns are items\n";
  out << factor.rows() << ' ' << factor.cols() << ' ' << nnz << '\n';
  for (Eigen::Index j = 0; j < factor.cols(); ++j) {
    for (Eigen::Index k = 0; k < factor.rows(); ++k) {
      if (factor(k, j) == 0.0) continue;
      out << k + 1 << ' ' << j + 1 << ' ';
      write_double(out, factor(k, j));
      out << '\n';
    }
  }
}

void save_matrix_market(const std::filesystem::path& path, const DenseFactord& factor,
                        const std::string& name) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_matrix_market(out, factor, name);
}

void write_tsv(std::ostream& out, const DenseFactord& factor) {
  for (Eigen::Index k = 0; k < factor.rows(); ++k) {
    for (Eigen::Index j = 0; j < factor.cols(); ++j) {
      if (j > 0) out << '\t';
      write_double(out, factor(k, j));
    }
    out << '\n';
  }
}

void save_tsv(const std::filesystem::path& path, const DenseFactord& factor) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_tsv(out, factor);
}

}  // namespace klnmf
