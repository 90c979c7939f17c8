#include "gmml/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>
#include <string>

#include "binary_io.hpp"
#include "gmml/error.hpp"
#include "gmml/rng.hpp"

namespace gmml {

namespace {

constexpr std::uint32_t kDatasetVersion = 1;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no) {
  T value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw Error(ErrorCode::parse_failure,
                "line " + std::to_string(line_no) + ": cannot parse '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view name) noexcept {
  if (name == "train" || name == "0") return Split::train;
  if (name == "val" || name == "1") return Split::val;
  if (name == "test" || name == "2") return Split::test;
  return std::nullopt;
}

std::vector<ClassId> Dataset::classes_in(Split split) const {
  std::vector<ClassId> out;
  for (const auto& [label, s] : splits) {
    if (s == split) out.push_back(label);
  }
  return out;
}

std::vector<LabeledSample> Dataset::samples_in(Split split) const {
  std::vector<LabeledSample> out;
  for (std::size_t i = 0; i < size(); ++i) {
    const auto it = splits.find(labels[i]);
    if (it != splits.end() && it->second == split) {
      const auto r = row(i);
      out.push_back({Vector(r.begin(), r.end()), labels[i]});
    }
  }
  return out;
}

void Dataset::validate() const {
  if (dim == 0) throw Error(ErrorCode::invalid_argument, "dataset dimension must be positive");
  if (features.size() != labels.size() * dim) {
    throw Error(ErrorCode::dimension_mismatch, "feature payload does not match rows x dim");
  }
  std::set<ClassId> seen;
  for (ClassId label : labels) {
    if (!splits.contains(label)) {
      throw Error(ErrorCode::parse_failure, "label " + std::to_string(label) + " has no split assignment");
    }
    seen.insert(label);
  }
  for (const auto& [label, split] : splits) {
    if (!seen.contains(label)) {
      throw Error(ErrorCode::insufficient_data, "class " + std::to_string(label) + " has no samples");
    }
  }
  for (double v : features) {
    if (!std::isfinite(v)) throw Error(ErrorCode::invalid_argument, "dataset features must be finite");
  }
}

void SyntheticSpec::validate() const {
  if (classes < 1 || modes_per_class < 1 || dim < 1 || samples_per_class < 1) {
    throw Error(ErrorCode::invalid_argument, "synthetic spec counts must be at least 1");
  }
  if (!(noise_sigma > 0.0)) throw Error(ErrorCode::invalid_argument, "noise_sigma must be positive");
  if (!(mode_separation >= 0.0) || !(class_separation >= 0.0)) {
    throw Error(ErrorCode::invalid_argument, "separations must be nonnegative");
  }
}

std::optional<SyntheticSpec> synthetic_preset(std::string_view name) {
  if (name == "tri-modal-100") return SyntheticSpec{};
  return std::nullopt;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed, "data");
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.dim));
  Dataset ds;
  ds.dim = spec.dim;
  ds.features.reserve(spec.classes * spec.samples_per_class * spec.dim);
  ds.labels.reserve(spec.classes * spec.samples_per_class);
  Vector center(spec.dim);
  std::vector<Vector> modes(spec.modes_per_class, Vector(spec.dim));
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (double& v : center) v = spec.class_separation * scale * rng.normal();
    for (auto& mode : modes) {
      for (std::size_t k = 0; k < spec.dim; ++k) mode[k] = center[k] + spec.mode_separation * scale * rng.normal();
    }
    for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
      const Vector& mode = modes[s % spec.modes_per_class];
      for (std::size_t k = 0; k < spec.dim; ++k) ds.features.push_back(mode[k] + spec.noise_sigma * rng.normal());
      ds.labels.push_back(static_cast<ClassId>(c));
    }
    ds.splits[static_cast<ClassId>(c)] = Split::train;
  }
  return split_classes(std::move(ds), spec.fractions, spec.seed);
}

Dataset split_classes(Dataset dataset, const SplitFractions& f, std::uint64_t seed) {
  const double total = f.train + f.val + f.test;
  if (f.train < 0.0 || f.val < 0.0 || f.test < 0.0 || std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::invalid_argument, "split fractions must be nonnegative and sum to 1");
  }
  std::vector<ClassId> classes;
  {
    std::set<ClassId> unique(dataset.labels.begin(), dataset.labels.end());
    for (const auto& [label, split] : dataset.splits) unique.insert(label);
    classes.assign(unique.begin(), unique.end());
  }
  const auto n = static_cast<long long>(classes.size());
  const auto n_train = std::llround(f.train * static_cast<double>(n));
  const auto n_val = std::llround(f.val * static_cast<double>(n));
  const long long n_test = n - n_train - n_val;
  if (n_test < 0 || (f.train > 0.0 && n_train == 0) || (f.val > 0.0 && n_val == 0) ||
      (f.test > 0.0 && n_test == 0)) {
    throw Error(ErrorCode::insufficient_data,
                std::to_string(n) + " classes are too few for the requested split fractions");
  }
  Rng rng(seed, "split");
  rng.shuffle(std::span(classes));
  dataset.splits.clear();
  for (long long i = 0; i < n; ++i) {
    const Split s = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
    dataset.splits[classes[static_cast<std::size_t>(i)]] = s;
  }
  return dataset;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path, PayloadPrecision precision) {
  dataset.validate();
  io::ByteWriter w;
  w.magic("GMDS");
  w.put<std::uint32_t>(kDatasetVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dataset.dim));
  w.put<std::uint64_t>(dataset.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dataset.splits.size()));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(precision));
  for (const auto& [label, split] : dataset.splits) {
    w.put<std::uint32_t>(label);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(split));
  }
  for (double v : dataset.features) {
    if (precision == PayloadPrecision::f32) {
      w.put<float>(static_cast<float>(v));
    } else {
      w.put<double>(v);
    }
  }
  for (ClassId label : dataset.labels) w.put<std::uint32_t>(label);
  w.seal();
  io::write_file(path, w.bytes());
}

namespace {

Dataset parse_gmds(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (r.magic(4) != "GMDS") throw Error(ErrorCode::bad_magic, "not a GMDS dataset");
  const auto version = r.get<std::uint32_t>();
  if (version != kDatasetVersion) {
    throw Error(ErrorCode::unsupported_version, "dataset version " + std::to_string(version));
  }
  Dataset ds;
  ds.dim = r.get<std::uint32_t>();
  const auto rows = r.get<std::uint64_t>();
  const auto class_count = r.get<std::uint32_t>();
  const auto width = r.get<std::uint8_t>();
  if (width != 4 && width != 8) throw Error(ErrorCode::parse_failure, "unknown precision tag");
  if (ds.dim == 0) throw Error(ErrorCode::dimension_mismatch, "header dimension is zero");
  for (std::uint32_t c = 0; c < class_count; ++c) {
    const auto label = r.get<std::uint32_t>();
    const auto split = r.get<std::uint8_t>();
    if (split > 2) throw Error(ErrorCode::parse_failure, "unknown split tag");
    ds.splits[label] = static_cast<Split>(split);
  }

  // Size accounting before the checksum, so a header/payload disagreement is
  // reported as such rather than as a generic CRC failure.
  const std::size_t trailer = rows * 4 + 4;
  const std::size_t expected = rows * ds.dim * width + trailer;
  const std::size_t remaining = r.remaining();
  if (remaining != expected) {
    if (rows > 0 && remaining > trailer && (remaining - trailer) % (rows * width) == 0) {
      throw Error(ErrorCode::dimension_mismatch,
                  "header declares D=" + std::to_string(ds.dim) + " but payload holds D=" +
                      std::to_string((remaining - trailer) / (rows * width)));
    }
    if (remaining < expected) {
      throw Error(ErrorCode::truncated_payload, "expected " + std::to_string(expected) +
                                                    " payload bytes, found " + std::to_string(remaining));
    }
    throw Error(ErrorCode::parse_failure, "unexpected trailing bytes");
  }
  io::check_crc(bytes);

  ds.features.resize(rows * ds.dim);
  for (double& v : ds.features) v = width == 4 ? static_cast<double>(r.get<float>()) : r.get<double>();
  ds.labels.resize(rows);
  for (ClassId& label : ds.labels) label = r.get<std::uint32_t>();
  ds.validate();
  return ds;
}

}  // namespace

Dataset parse_dataset_csv(std::string_view text) {
  Dataset ds;
  std::size_t line_no = 0;
  bool header = false;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    const std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_fields(line);
    if (!header) {
      const std::string_view dim_field = fields.size() == 2 && fields[0] == "dim" ? fields[1] : fields[0];
      if (fields.size() > 2 || (fields.size() == 2 && fields[0] != "dim")) {
        throw Error(ErrorCode::parse_failure, "CSV header must be 'dim,<D>'");
      }
      ds.dim = parse_number<std::size_t>(dim_field, line_no);
      if (ds.dim == 0) throw Error(ErrorCode::dimension_mismatch, "CSV dimension must be positive");
      header = true;
      continue;
    }
    if (fields.size() != ds.dim + 2) {
      throw Error(ErrorCode::dimension_mismatch, "line " + std::to_string(line_no) + " has " +
                                                     std::to_string(fields.size()) + " fields, expected " +
                                                     std::to_string(ds.dim + 2));
    }
    for (std::size_t k = 0; k < ds.dim; ++k) ds.features.push_back(parse_number<double>(fields[k], line_no));
    const auto label = parse_number<ClassId>(fields[ds.dim], line_no);
    const auto split = parse_split(fields[ds.dim + 1]);
    if (!split) throw Error(ErrorCode::parse_failure, "line " + std::to_string(line_no) + ": unknown split");
    const auto [it, inserted] = ds.splits.emplace(label, *split);
    if (!inserted && it->second != *split) {
      throw Error(ErrorCode::parse_failure, "class " + std::to_string(label) + " appears in two splits");
    }
    ds.labels.push_back(label);
  }
  if (!header) throw Error(ErrorCode::parse_failure, "CSV has no header row");
  ds.validate();
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = io::read_file(path);
  const bool binary = bytes.size() >= 4 && std::equal(bytes.begin(), bytes.begin() + 4, "GMDS");
  if (binary || path.extension() != ".csv") return parse_gmds(bytes);
  return parse_dataset_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace gmml
