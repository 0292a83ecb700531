#include "lingrad/data.hpp"

#include "lingrad/errors.hpp"
#include "lingrad/rng.hpp"

#include "binio.hpp"

#include <cmath>

namespace lingrad {

namespace {

// Sub-streams of the user seed.
constexpr std::uint64_t kTeacherStream = 1;
constexpr std::uint64_t kTrainInputStream = 2;
constexpr std::uint64_t kTestInputStream = 3;

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

std::vector<Vector> normal_inputs(std::size_t n, std::size_t width, Rng& rng) {
  std::vector<Vector> xs;
  xs.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    Vector x(static_cast<Eigen::Index>(width));
    for (auto& v : x) v = rng.normal();
    xs.push_back(std::move(x));
  }
  return xs;
}

}  // namespace

std::size_t Dataset::input_width() const {
  if (samples.empty()) throw ConfigError("dataset is empty");
  return static_cast<std::size_t>(samples.front().x.size());
}

std::size_t Dataset::output_width() const {
  if (samples.empty()) throw ConfigError("dataset is empty");
  return static_cast<std::size_t>(samples.front().y.size());
}

void Dataset::validate() const {
  if (samples.empty()) throw ConfigError("dataset is empty");
  const auto nx = samples.front().x.size();
  const auto ny = samples.front().y.size();
  for (std::size_t s = 0; s < samples.size(); ++s)
    if (samples[s].x.size() != nx || samples[s].y.size() != ny)
      throw ConfigError("dataset sample " + std::to_string(s) + " has inconsistent dimensions");
}

Dataset label_with(const Network& teacher, std::vector<Vector> inputs, std::string provenance) {
  Dataset ds;
  ds.provenance = std::move(provenance);
  ds.samples.reserve(inputs.size());
  for (auto& x : inputs) {
    Vector y = forward(teacher, x).output();
    ds.samples.push_back(Sample{std::move(x), std::move(y)});
  }
  return ds;
}

TeacherTask generate_teacher_dataset(std::span<const std::size_t> widths, std::size_t n_train,
                                     std::size_t n_test, std::uint64_t seed) {
  if (widths.size() < 2) throw ConfigError("teacher: need at least two widths");
  for (auto w : widths)
    if (w == 0) throw ConfigError("teacher: widths must be positive");
  if (n_train == 0 || n_test == 0) throw ConfigError("teacher: sample counts must be >= 1");
  Rng teacher_rng = Rng::derive(seed, kTeacherStream);
  Rng train_rng = Rng::derive(seed, kTrainInputStream);
  Rng test_rng = Rng::derive(seed, kTestInputStream);
  TeacherTask task;
  task.teacher = random_dense_network(widths, teacher_rng);
  const std::string tag = "teacher:seed=" + std::to_string(seed);
  task.train = label_with(task.teacher, normal_inputs(n_train, widths.front(), train_rng), tag + ":train");
  task.test = label_with(task.teacher, normal_inputs(n_test, widths.front(), test_rng), tag + ":test");
  return task;
}

Dataset decode_mnist_idx(std::span<const std::uint8_t> images,
                         std::span<const std::uint8_t> labels) {
  if (images.size() < 16) throw FormatError("IDX images: truncated header");
  if (labels.size() < 8) throw FormatError("IDX labels: truncated header");
  if (be32(images, 0) != 0x00000803) throw FormatError("IDX images: bad magic");
  if (be32(labels, 0) != 0x00000801) throw FormatError("IDX labels: bad magic");
  const std::size_t n_images = be32(images, 4);
  const std::size_t rows = be32(images, 8);
  const std::size_t cols = be32(images, 12);
  const std::size_t n_labels = be32(labels, 4);
  if (n_images != n_labels)
    throw FormatError("IDX: " + std::to_string(n_images) + " images but " +
                      std::to_string(n_labels) + " labels");
  const std::size_t pixels = rows * cols;
  if (pixels == 0) throw FormatError("IDX images: zero-sized image");
  if ((images.size() - 16) / pixels < n_images || images.size() - 16 != n_images * pixels)
    throw FormatError("IDX images: truncated or oversized payload");
  if (labels.size() - 8 != n_labels) throw FormatError("IDX labels: truncated or oversized payload");

  Dataset ds;
  ds.samples.reserve(n_images);
  for (std::size_t s = 0; s < n_images; ++s) {
    Vector x(static_cast<Eigen::Index>(pixels));
    const std::uint8_t* p = images.data() + 16 + s * pixels;
    for (std::size_t k = 0; k < pixels; ++k) x(static_cast<Eigen::Index>(k)) = p[k] / 255.0;
    const std::uint8_t label = labels[8 + s];
    if (label > 9) throw FormatError("IDX labels: label " + std::to_string(label) + " out of range");
    ds.samples.push_back(Sample{std::move(x), Vector::Unit(10, label)});
  }
  return ds;
}

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  const auto images = detail::read_file(images_path);
  const auto labels = detail::read_file(labels_path);
  Dataset ds = decode_mnist_idx(images, labels);
  ds.provenance = images_path;
  return ds;
}

std::size_t argmax(const Vector& v) {
  if (v.size() == 0) throw ConfigError("argmax of empty vector");
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < v.size(); ++k)
    if (v(k) > v(best)) best = k;
  return static_cast<std::size_t>(best);
}

double metric_normalized_distance(const Network& net, const Dataset& ds) {
  ds.validate();
  const double root_m = std::sqrt(static_cast<double>(net.output_width()));
  double total = 0.0;
  for (const auto& s : ds.samples) total += (forward(net, s.x).output() - s.y).norm() / root_m;
  return total / static_cast<double>(ds.size());
}

double metric_classification_error(const Network& net, const Dataset& ds) {
  ds.validate();
  std::size_t wrong = 0;
  for (const auto& s : ds.samples)
    if (argmax(forward(net, s.x).output()) != argmax(s.y)) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(ds.size());
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  ds.validate();
  detail::ByteWriter w;
  w.raw("LRD1");
  w.u64(ds.size());
  w.u64(ds.input_width());
  w.u64(ds.output_width());
  for (const auto& s : ds.samples) {
    for (double v : s.x) w.f64(v);
    for (double v : s.y) w.f64(v);
  }
  return w.take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes, std::string provenance) {
  detail::ByteReader r(bytes, "dataset");
  r.expect_magic("LRD1");
  const std::uint64_t n = r.u64();
  const std::uint64_t nx = r.u64();
  const std::uint64_t ny = r.u64();
  if (n == 0 || nx == 0 || ny == 0) throw FormatError("dataset: empty dimensions");
  if (nx + ny > UINT64_MAX / 8 / n) throw FormatError("dataset: sizes overflow");
  r.need(n * (nx + ny) * 8);
  Dataset ds;
  ds.provenance = std::move(provenance);
  ds.samples.reserve(n);
  for (std::uint64_t s = 0; s < n; ++s) {
    Sample smp{Vector(static_cast<Eigen::Index>(nx)), Vector(static_cast<Eigen::Index>(ny))};
    for (auto& v : smp.x) v = r.f64();
    for (auto& v : smp.y) v = r.f64();
    ds.samples.push_back(std::move(smp));
  }
  if (r.remaining() != 0) throw FormatError("dataset: trailing bytes");
  return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) {
  detail::write_file(path, encode_dataset(ds));
}

Dataset load_dataset(const std::string& path) {
  return decode_dataset(detail::read_file(path), path);
}

}  // namespace lingrad
