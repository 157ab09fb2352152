#ifndef BRANCHTREE_H
#define BRANCHTREE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BtStatus {
  BT_STATUS_OK = 0,
  BT_STATUS_NULL_POINTER = 1,
  BT_STATUS_INVALID_UTF8 = 2,
  BT_STATUS_DOMAIN = 3,
  BT_STATUS_INVALID_MECHANISM = 4,
  BT_STATUS_INVALID_OFFSPRING = 5,
  BT_STATUS_GREY_CONDITION_FAILS = 6,
  BT_STATUS_BUDGET_EXCEEDED = 7,
  BT_STATUS_INVALID_TREE = 8,
  BT_STATUS_INFEASIBLE = 9,
  BT_STATUS_SOLVER = 10,
  BT_STATUS_CONFIG = 11,
  BT_STATUS_IO = 12,
  BT_STATUS_BUFFER_TOO_SMALL = 13,
  BT_STATUS_PANIC = 14,
} BtStatus;

typedef struct BtCsbp BtCsbp;

typedef struct BtMechanism BtMechanism;

typedef struct BtOffspring BtOffspring;

typedef struct BtTree BtTree;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread. Valid until the next
// failing call on the same thread.
const char *bt_last_error(void);

const char *bt_status_name(enum BtStatus status);

// `ψ(λ) = βλ²`.
enum BtStatus bt_mechanism_quadratic(double beta, struct BtMechanism **result);

// `ψ(λ) = cλ^γ`, `1 < γ ≤ 2`.
enum BtStatus bt_mechanism_stable(double c, double gamma, struct BtMechanism **result);

void bt_mechanism_free(struct BtMechanism *m);

enum BtStatus bt_mechanism_psi(const struct BtMechanism *m, double lambda, double *result);

// Kernel for `u_t(λ)` and `v(t)`; copies the mechanism.
enum BtStatus bt_csbp_new(const struct BtMechanism *m, struct BtCsbp **result);

void bt_csbp_free(struct BtCsbp *k);

enum BtStatus bt_csbp_u(const struct BtCsbp *k, double t, double lambda, double *result);

enum BtStatus bt_csbp_v(const struct BtCsbp *k, double t, double *result);

// `μ(k) = 2^{−k−1}`.
enum BtStatus bt_offspring_geometric(struct BtOffspring **result);

// Generating function `r + (1−r)^γ/γ`.
enum BtStatus bt_offspring_stable(double gamma, struct BtOffspring **result);

// Custom law from `len` probabilities.
enum BtStatus bt_offspring_custom(const double *pmf, size_t len, struct BtOffspring **result);

void bt_offspring_free(struct BtOffspring *d);

enum BtStatus bt_offspring_pmf(const struct BtOffspring *d, size_t k, double *result);

// `g_n(r)`, the `n`-fold composition of the generating function.
enum BtStatus bt_offspring_gf_iterate(const struct BtOffspring *d,
                                      uint64_t n,
                                      double r,
                                      double *result);

// One tree from stream 0 of `seed`, at most `budget` vertices.
enum BtStatus bt_tree_sample(const struct BtOffspring *d,
                             uint64_t seed,
                             size_t budget,
                             struct BtTree **result);

// Parses child counts in lexicographic order, e.g. `"2,0,1,0"`.
enum BtStatus bt_tree_parse(const char *s, struct BtTree **result);

void bt_tree_free(struct BtTree *t);

enum BtStatus bt_tree_size(const struct BtTree *t, size_t *result);

// Height sequence into `buf` (`len` entries); `needed` gets the size.
enum BtStatus bt_tree_height(const struct BtTree *t, uint32_t *buf, size_t len, size_t *needed);

// Contour sequence into `buf` (`len` entries); `needed` gets the size.
enum BtStatus bt_tree_contour(const struct BtTree *t, uint32_t *buf, size_t len, size_t *needed);

// Child-count string of the tree.
enum BtStatus bt_tree_to_string(const struct BtTree *t, char *buf, size_t len, size_t *needed);

// Mirror image (children in reverse order) as a new handle.
enum BtStatus bt_tree_mirror(const struct BtTree *t, struct BtTree **result);

// Stable skeleton probability of the tree given as a child-count string.
enum BtStatus bt_stable_skeleton_pmf(double gamma, const char *skeleton, double *result);

// Runs the experiment described by a TOML configuration and returns the
// JSON report, to be released with [`bt_string_free`]. `passed` receives
// 1 when every check passed.
enum BtStatus bt_run_experiment(const char *config_toml, char **report_json, int32_t *passed);

void bt_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BRANCHTREE_H */
