#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heintfl/labeled_image.hpp"

namespace heintfl::data {

// One client's local data: the private (possibly class-imbalanced) authentic
// set and the disjoint synthetic set used on plaintext rounds.
struct ClientDataset {
  int client_id = 0;
  std::vector<LabeledImage> authentic;
  std::vector<LabeledImage> synthetic;
};

// An assignment of pool indices to clients. Index lists are disjoint and
// cover the pool exactly; every client receives at least one sample.
struct PartitionPlan {
  int num_clients = 0;
  double alpha = 0.0;  // 0 for IID plans
  std::uint64_t seed = 0;
  std::vector<std::vector<std::size_t>> client_indices;
};

// Reads CIFAR-10 binary batches: 3073-byte records, 1 label byte followed by
// 3072 pixel bytes (R,G,B planes of 32x32). Pixels are scaled to [0,1].
std::vector<LabeledImage> load_cifar10_binary(const std::string& path);

// Deterministic class-separable grayscale blobs: `size` x `size` pixels,
// per-class Gaussian bump pattern plus noise, clamped to [0,1].
struct ToyDatasetOptions {
  double noise = 0.22;
  double brightness_jitter = 0.06;
};
std::vector<LabeledImage> make_toy_dataset(int num_classes, int per_class, int size,
                                           std::uint64_t seed,
                                           const ToyDatasetOptions& opts = {});

// Splits a pool into two disjoint halves stratified by class; overall sizes
// differ by at most one, as do the per-class counts between the halves.
std::pair<std::vector<LabeledImage>, std::vector<LabeledImage>> split_authentic_synthetic(
    const std::vector<LabeledImage>& pool, std::uint64_t seed);

// Non-IID partition: for each class a client-share vector is drawn from
// Dirichlet(alpha,...,alpha) and counts assigned by largest-remainder
// rounding. Redraws (bounded) if some client would end up empty.
PartitionPlan partition_dirichlet(const std::vector<LabeledImage>& pool, int num_clients,
                                  double alpha, std::uint64_t seed);

// IID partition: per-class seeded shuffle dealt round-robin, so per-client
// class histograms differ by at most one.
PartitionPlan partition_iid(const std::vector<LabeledImage>& pool, int num_clients,
                            std::uint64_t seed);

// Materializes a plan into per-client sample lists.
std::vector<std::vector<LabeledImage>> apply_plan(const std::vector<LabeledImage>& pool,
                                                  const PartitionPlan& plan);

// Highest label + 1 over the pool.
int count_classes(const std::vector<LabeledImage>& pool);

}  // namespace heintfl::data
