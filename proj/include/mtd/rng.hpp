#pragma once

#include <cstdint>
#include <memory>

#include <Eigen/Dense>

namespace mtd {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Named stream ids. Each random quantity in a trial draws from its own
/// stream so that scenarios can be replayed component by component.
namespace streams {
constexpr std::uint64_t kProcessNoise = 1;      // w_k
constexpr std::uint64_t kAuxProcessNoise = 2;   // auxiliary-block process noise
constexpr std::uint64_t kSensorNoise = 3;       // v_k
constexpr std::uint64_t kAuxSensorNoise = 4;    // auxiliary-block sensor noise
constexpr std::uint64_t kInitialState = 5;
constexpr std::uint64_t kAuxInitialState = 6;
constexpr std::uint64_t kCouplingA = 7;         // time-varying state coupling
constexpr std::uint64_t kActuatorB = 8;         // time-varying auxiliary actuators
constexpr std::uint64_t kCouplingC = 9;         // time-varying output coupling
constexpr std::uint64_t kNonlinearG = 10;       // time-varying nonlinearity direction
constexpr std::uint64_t kModeSchedule = 11;     // hybrid mode schedule
constexpr std::uint64_t kAttacker = 12;         // attacker's own sampling
constexpr std::uint64_t kParticles = 13;        // particle filter proposals
constexpr std::uint64_t kMisc = 14;
}  // namespace streams

/// Counter-based source of IID standard normals and uniforms.
///
/// Every value is a pure function of (seed, stream, step, index), so a draw
/// can be replayed without replaying anything else. The default
/// implementation uses a 64-bit mixing function; a deployment that needs a
/// cryptographically secure sequence can substitute its own subclass here —
/// all model code takes the source through this interface.
class NormalSource {
 public:
  virtual ~NormalSource() = default;

  /// Uniform draw in [0, 1).
  virtual double uniform(std::uint64_t stream, std::uint64_t step,
                         std::uint64_t index) const = 0;

  /// Standard normal draw.
  virtual double normal(std::uint64_t stream, std::uint64_t step,
                        std::uint64_t index) const = 0;

  /// Vector of `n` IID standard normals at consecutive indices.
  Vec normal_vector(std::uint64_t stream, std::uint64_t step, int n,
                    std::uint64_t index0 = 0) const;

  /// rows x cols matrix of IID standard normals, row-major indexing.
  Mat normal_matrix(std::uint64_t stream, std::uint64_t step, int rows,
                    int cols, std::uint64_t index0 = 0) const;

  /// Uniform integer in {0, ..., n-1}.
  int uniform_int(std::uint64_t stream, std::uint64_t step, int n,
                  std::uint64_t index = 0) const;
};

/// Default counter-based generator built on the splitmix64 finalizer.
class SplitMixSource final : public NormalSource {
 public:
  explicit SplitMixSource(std::uint64_t seed) : seed_(seed) {}

  double uniform(std::uint64_t stream, std::uint64_t step,
                 std::uint64_t index) const override;
  double normal(std::uint64_t stream, std::uint64_t step,
                std::uint64_t index) const override;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t cell(std::uint64_t stream, std::uint64_t step,
                     std::uint64_t index) const;
  std::uint64_t seed_;
};

/// Derives the seed for trial `trial` of an experiment from a master seed.
std::uint64_t derive_trial_seed(std::uint64_t master_seed, std::uint64_t trial);

/// Derives an unrelated child seed (e.g. the attacker's private sampling).
std::uint64_t derive_child_seed(std::uint64_t seed, std::uint64_t tag);

using SourcePtr = std::shared_ptr<const NormalSource>;

inline SourcePtr make_source(std::uint64_t seed) {
  return std::make_shared<SplitMixSource>(seed);
}

}  // namespace mtd
