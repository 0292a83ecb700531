#pragma once

#include "lingrad/net.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lingrad {

struct Sample {
  Vector x;
  Vector y;
};

struct Dataset {
  std::vector<Sample> samples;
  std::string provenance;

  std::size_t size() const { return samples.size(); }
  std::size_t input_width() const;
  std::size_t output_width() const;
  // Nonempty with homogeneous dimensions; throws ConfigError otherwise.
  void validate() const;
};

struct TeacherTask {
  Dataset train;
  Dataset test;
  Network teacher;
};

// Frozen random teacher (i.i.d. standard normal parameters) labels i.i.d.
// standard normal inputs. The teacher, training inputs and test inputs come
// from separate derived streams of `seed`.
TeacherTask generate_teacher_dataset(std::span<const std::size_t> widths, std::size_t n_train,
                                     std::size_t n_test, std::uint64_t seed);

// Labels given inputs through an explicit teacher.
Dataset label_with(const Network& teacher, std::vector<Vector> inputs, std::string provenance);

// IDX images (magic 0x00000803) and labels (0x00000801), big-endian headers.
// Pixels scaled to [0,1] by /255, labels one-hot encoded to length 10.
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);
Dataset decode_mnist_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels);

// Mean over samples of ||u_I - y|| / sqrt(m_I).
double metric_normalized_distance(const Network& net, const Dataset& ds);
// Fraction of samples whose argmax output differs from the argmax target.
// Ties resolve to the lowest index.
double metric_classification_error(const Network& net, const Dataset& ds);

// Lowest index of the largest entry.
std::size_t argmax(const Vector& v);

// Dataset container ("LRD1"), see docs/formats.md.
std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::span<const std::uint8_t> bytes, std::string provenance = {});
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

}  // namespace lingrad
