#include "heintfl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "heintfl/rng.hpp"

namespace heintfl::data {

namespace {

constexpr std::size_t kCifarRecordBytes = 3073;
constexpr int kCifarEdge = 32;
constexpr int kCifarChannels = 3;
constexpr int kCifarClasses = 10;

std::vector<std::vector<std::size_t>> indices_by_class(const std::vector<LabeledImage>& pool) {
  std::vector<std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const int label = pool[i].label;
    if (label < 0) throw std::invalid_argument("negative class label");
    if (static_cast<std::size_t>(label) >= by_class.size()) {
      by_class.resize(static_cast<std::size_t>(label) + 1);
    }
    by_class[static_cast<std::size_t>(label)].push_back(i);
  }
  return by_class;
}

}  // namespace

std::vector<LabeledImage> load_cifar10_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open CIFAR-10 file: " + path);
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  if (size == 0 || size % kCifarRecordBytes != 0) {
    throw std::runtime_error("CIFAR-10 file size is not a multiple of 3073 bytes: " + path);
  }
  const std::size_t records = size / kCifarRecordBytes;
  std::vector<LabeledImage> images;
  images.reserve(records);
  std::vector<unsigned char> buf(kCifarRecordBytes);
  for (std::size_t r = 0; r < records; ++r) {
    if (!in.read(reinterpret_cast<char*>(buf.data()), kCifarRecordBytes)) {
      throw std::runtime_error("short read in CIFAR-10 file: " + path);
    }
    if (buf[0] >= kCifarClasses) {
      throw std::runtime_error("CIFAR-10 label byte out of range in record " + std::to_string(r));
    }
    LabeledImage img;
    img.label = buf[0];
    img.pixels = Tensor::zeros({kCifarChannels, kCifarEdge, kCifarEdge});
    for (std::size_t i = 0; i < kCifarRecordBytes - 1; ++i) {
      img.pixels.values[i] = static_cast<double>(buf[i + 1]) / 255.0;
    }
    images.push_back(std::move(img));
  }
  return images;
}

std::vector<LabeledImage> make_toy_dataset(int num_classes, int per_class, int size,
                                           std::uint64_t seed, const ToyDatasetOptions& opts) {
  if (num_classes < 2) throw std::invalid_argument("make_toy_dataset: need >= 2 classes");
  if (per_class < 1) throw std::invalid_argument("make_toy_dataset: per_class must be positive");
  if (size < 8) throw std::invalid_argument("make_toy_dataset: size must be >= 8");

  // Class template: a smooth bump at a class-specific location.
  Rng proto_rng(derive_seed(seed, "toy-proto"));
  std::vector<std::vector<double>> templates(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    const double cx = proto_rng.uniform(0.2, 0.8) * (size - 1);
    const double cy = proto_rng.uniform(0.2, 0.8) * (size - 1);
    const double radius = proto_rng.uniform(0.16, 0.3) * size;
    auto& t = templates[static_cast<std::size_t>(c)];
    t.resize(static_cast<std::size_t>(size) * size);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        t[static_cast<std::size_t>(y) * size + x] =
            0.3 + 0.55 * std::exp(-d2 / (2.0 * radius * radius));
      }
    }
  }

  std::vector<LabeledImage> images;
  images.reserve(static_cast<std::size_t>(num_classes) * per_class);
  Rng rng(derive_seed(seed, "toy-samples"));
  for (int c = 0; c < num_classes; ++c) {
    const auto& t = templates[static_cast<std::size_t>(c)];
    for (int s = 0; s < per_class; ++s) {
      LabeledImage img;
      img.label = c;
      img.pixels = Tensor::zeros({1, size, size});
      const double shift = rng.gaussian() * opts.brightness_jitter;
      for (std::size_t i = 0; i < t.size(); ++i) {
        const double v = t[i] + shift + rng.gaussian() * opts.noise;
        img.pixels.values[i] = std::clamp(v, 0.0, 1.0);
      }
      images.push_back(std::move(img));
    }
  }
  return images;
}

std::pair<std::vector<LabeledImage>, std::vector<LabeledImage>> split_authentic_synthetic(
    const std::vector<LabeledImage>& pool, std::uint64_t seed) {
  if (pool.size() < 2) throw std::invalid_argument("split_authentic_synthetic: pool too small");
  auto by_class = indices_by_class(pool);
  Rng rng(derive_seed(seed, "half-split"));

  std::vector<LabeledImage> authentic, synthetic;
  // Alternate which half receives the odd sample so the overall sizes stay
  // within one of each other.
  bool extra_to_authentic = true;
  for (auto& cls : by_class) {
    rng.shuffle(cls);
    std::size_t first = cls.size() / 2;
    if (cls.size() % 2 != 0) {
      if (extra_to_authentic) first += 1;
      extra_to_authentic = !extra_to_authentic;
    }
    for (std::size_t i = 0; i < cls.size(); ++i) {
      (i < first ? authentic : synthetic).push_back(pool[cls[i]]);
    }
  }
  return {std::move(authentic), std::move(synthetic)};
}

PartitionPlan partition_dirichlet(const std::vector<LabeledImage>& pool, int num_clients,
                                  double alpha, std::uint64_t seed) {
  if (num_clients < 2) throw std::invalid_argument("partition_dirichlet: need >= 2 clients");
  if (!(alpha > 0.0)) throw std::invalid_argument("partition_dirichlet: alpha must be positive");
  if (pool.size() < static_cast<std::size_t>(num_clients)) {
    throw std::invalid_argument("partition_dirichlet: fewer samples than clients");
  }
  const auto by_class = indices_by_class(pool);

  constexpr int kMaxRedraws = 100;
  Rng rng(derive_seed(seed, "dirichlet"));
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    PartitionPlan plan;
    plan.num_clients = num_clients;
    plan.alpha = alpha;
    plan.seed = seed;
    plan.client_indices.assign(static_cast<std::size_t>(num_clients), {});

    for (const auto& cls : by_class) {
      if (cls.empty()) continue;
      std::vector<std::size_t> shuffled = cls;
      rng.shuffle(shuffled);
      const auto shares = rng.dirichlet(alpha, static_cast<std::size_t>(num_clients));

      // Largest-remainder rounding of shares -> integer counts.
      const std::size_t n = shuffled.size();
      std::vector<std::size_t> counts(static_cast<std::size_t>(num_clients));
      std::vector<std::pair<double, int>> remainders;
      std::size_t assigned = 0;
      for (int i = 0; i < num_clients; ++i) {
        const double exact = shares[static_cast<std::size_t>(i)] * static_cast<double>(n);
        counts[static_cast<std::size_t>(i)] = static_cast<std::size_t>(std::floor(exact));
        assigned += counts[static_cast<std::size_t>(i)];
        remainders.emplace_back(exact - std::floor(exact), i);
      }
      std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;  // ties to the lower client index
      });
      // at most num_clients-1 leftovers, one per distinct remainder
      for (std::size_t k = 0; assigned < n; ++k, ++assigned) {
        counts[static_cast<std::size_t>(remainders[k].second)] += 1;
      }

      std::size_t cursor = 0;
      for (int i = 0; i < num_clients; ++i) {
        for (std::size_t k = 0; k < counts[static_cast<std::size_t>(i)]; ++k) {
          plan.client_indices[static_cast<std::size_t>(i)].push_back(shuffled[cursor++]);
        }
      }
    }

    const bool all_nonempty = std::all_of(plan.client_indices.begin(), plan.client_indices.end(),
                                          [](const auto& v) { return !v.empty(); });
    if (all_nonempty) return plan;
  }
  throw std::runtime_error("partition_dirichlet: could not give every client a sample");
}

PartitionPlan partition_iid(const std::vector<LabeledImage>& pool, int num_clients,
                            std::uint64_t seed) {
  if (num_clients < 2) throw std::invalid_argument("partition_iid: need >= 2 clients");
  if (pool.size() < static_cast<std::size_t>(num_clients)) {
    throw std::invalid_argument("partition_iid: fewer samples than clients");
  }
  auto by_class = indices_by_class(pool);
  Rng rng(derive_seed(seed, "iid"));

  PartitionPlan plan;
  plan.num_clients = num_clients;
  plan.alpha = 0.0;
  plan.seed = seed;
  plan.client_indices.assign(static_cast<std::size_t>(num_clients), {});

  // Deal each class round-robin, rotating the starting client so totals stay
  // balanced across classes with uneven sizes.
  std::size_t next_client = 0;
  for (auto& cls : by_class) {
    rng.shuffle(cls);
    for (std::size_t k = 0; k < cls.size(); ++k) {
      plan.client_indices[next_client].push_back(cls[k]);
      next_client = (next_client + 1) % static_cast<std::size_t>(num_clients);
    }
  }
  return plan;
}

std::vector<std::vector<LabeledImage>> apply_plan(const std::vector<LabeledImage>& pool,
                                                  const PartitionPlan& plan) {
  std::vector<std::vector<LabeledImage>> out(plan.client_indices.size());
  for (std::size_t c = 0; c < plan.client_indices.size(); ++c) {
    out[c].reserve(plan.client_indices[c].size());
    for (std::size_t idx : plan.client_indices[c]) {
      if (idx >= pool.size()) throw std::out_of_range("apply_plan: index outside pool");
      out[c].push_back(pool[idx]);
    }
  }
  return out;
}

int count_classes(const std::vector<LabeledImage>& pool) {
  int max_label = -1;
  for (const auto& img : pool) max_label = std::max(max_label, img.label);
  return max_label + 1;
}

}  // namespace heintfl::data
