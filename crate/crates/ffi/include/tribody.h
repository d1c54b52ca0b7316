#ifndef TRIBODY_H
#define TRIBODY_H

#include <stddef.h>
#include <stdint.h>

typedef enum TribodyStatus {
  TRIBODY_STATUS_OK = 0,
  TRIBODY_STATUS_NULL_POINTER = 1,
  TRIBODY_STATUS_INVALID_ARGUMENT = 2,
  // Integration accuracy, search or fit failure.
  TRIBODY_STATUS_NUMERICAL = 3,
  TRIBODY_STATUS_FAILED = 4,
  // A Rust panic was caught at the boundary.
  TRIBODY_STATUS_PANIC = 5,
} TribodyStatus;

typedef enum TribodyModelKind {
  // `chi3 (S+^3 + S-^3)`
  TRIBODY_MODEL_KIND_THREE_BODY = 0,
  TRIBODY_MODEL_KIND_OAT = 1,
  TRIBODY_MODEL_KIND_TAT = 2,
} TribodyModelKind;

// Opaque model handle.
typedef struct TribodyModel TribodyModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a model with interaction `strength` (`chi3` or `chi2`),
// collective decay `gamma` and single-atom rate `gamma_single`.
// Free with `tribody_model_free`.
//
// # Safety
//
// `out_model` must be null or valid for writes.
enum TribodyStatus tribody_model_new(enum TribodyModelKind kind,
                                     double strength,
                                     double gamma,
                                     double gamma_single,
                                     struct TribodyModel **out_model);

// Releases a handle. Null is ignored.
//
// # Safety
//
// `model` must be null or a live handle from `tribody_model_new`; it is invalid afterwards.
void tribody_model_free(struct TribodyModel *model);

// Physical time for the rescaled time `tau` at `n_atoms`.
//
// # Safety
//
// `model` must be null or a live handle; `out_t` null or valid for writes.
enum TribodyStatus tribody_time_of_tau(const struct TribodyModel *model,
                                       size_t n_atoms,
                                       double tau,
                                       double *out_t);

// QFI for `Sz` rotations along the closed evolution from the north pole,
// at each of `len` rescaled times. Open models are rejected.
//
// # Safety
//
// `model` must be null or a live handle; `taus` and `out_qfi` null or valid for `len` elements.
enum TribodyStatus tribody_qfi_curve(const struct TribodyModel *model,
                                     size_t n_atoms,
                                     const double *taus,
                                     size_t len,
                                     double *out_qfi);

// First QFI peak of the closed three-body model.
//
// # Safety
//
// Output pointers must be null or valid for writes.
enum TribodyStatus tribody_find_tau_opt(size_t n_atoms, double *out_tau, double *out_qfi);

// Metrological gain over the standard quantum limit of the sign-flip echo
// with `Sz` readout. Works for closed and open models.
//
// # Safety
//
// `model` must be null or a live handle; `out_gain` null or valid for writes.
enum TribodyStatus tribody_echo_gain(const struct TribodyModel *model,
                                     size_t n_atoms,
                                     double tau,
                                     double phi0,
                                     double *out_gain);

// Collective and single-atom rates in units of `chi3` at fixed `eta_c`,
// with `d = 2 Delta_c / kappa`.
//
// # Safety
//
// Output pointers must be null or valid for writes.
enum TribodyStatus tribody_rate_ratios_fixed_etac(size_t n_atoms,
                                                  double cooperativity,
                                                  double d,
                                                  double eta_c,
                                                  double *out_gamma,
                                                  double *out_gamma_single);

// Copies the last error of this thread into `buf` (NUL-terminated,
// truncated to `len`) and returns the full length including the NUL, or 0
// when the last call succeeded.
//
// # Safety
//
// `buf` must be null or valid for `len` bytes.
size_t tribody_last_error_message(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *tribody_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRIBODY_H */
