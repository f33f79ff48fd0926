#ifndef SIMULPL_H
#define SIMULPL_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum SimulplStatus {
  SIMULPL_STATUS_OK = 0,
  SIMULPL_STATUS_NULL_POINTER = 1,
  SIMULPL_STATUS_INVALID_UTF8 = 2,
  // Input failed validation (bad trace, alignment, scores, config, file).
  SIMULPL_STATUS_INVALID = 3,
  // The metric is undefined for this input, e.g. an empty hypothesis.
  SIMULPL_STATUS_UNDEFINED = 4,
  SIMULPL_STATUS_BUFFER_TOO_SMALL = 5,
  // Training, agent or other internal failure.
  SIMULPL_STATUS_INTERNAL = 6,
  SIMULPL_STATUS_PANIC = 7,
} SimulplStatus;

typedef enum SimulplTerminalMode {
  SIMULPL_TERMINAL_MODE_EOS_LOGRATIO = 0,
  SIMULPL_TERMINAL_MODE_PENALTY_ONLY = 1,
} SimulplTerminalMode;

// A trained toy agent loaded from a checkpoint.
typedef struct SimulplModel SimulplModel;

// Growable READ/WRITE log of one session.
typedef struct SimulplTrace SimulplTrace;

typedef struct SimulplLatency {
  double al;
  double laal;
  double ap;
  double dal;
} SimulplLatency;

typedef struct SimulplWorstCase {
  double al_worst;
  double bound;
  double c1;
  double c2;
} SimulplWorstCase;

// One alignment link, 1-based on both sides.
typedef struct SimulplLink {
  size_t target;
  size_t source;
} SimulplLink;

typedef struct SimulplPrefixPair {
  size_t source_prefix_len;
  size_t target_prefix_len;
} SimulplPrefixPair;

typedef struct SimulplLossConfig {
  double alpha;
  double beta;
  double lambda_w;
  double lambda_l;
  enum SimulplTerminalMode terminal_mode;
} SimulplLossConfig;

// Per-position scores of one sequence: `len` entries per array, the last
// one being the stop position.
typedef struct SimulplTokenScores {
  const double *logp_policy;
  const double *logp_ref;
  const double *confidence;
  size_t len;
} SimulplTokenScores;

// Gradient destination for one [`SimulplTokenScores`]; each array holds
// `len` entries. Either pointer may be null to skip it.
typedef struct SimulplScoreGrad {
  double *logp_policy;
  double *confidence;
} SimulplScoreGrad;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// Valid until the next simulpl call on the same thread.
const char *simulpl_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *simulpl_version(void);

// Creates an empty trace over a source of `source_len` words with a
// reference of `ref_len` words.
enum SimulplStatus simulpl_trace_new(size_t source_len,
                                     size_t ref_len,
                                     struct SimulplTrace **out_trace);

void simulpl_trace_free(struct SimulplTrace *trace);

// Appends a READ of `k` source words; rejects reads past the source end.
enum SimulplStatus simulpl_trace_read(struct SimulplTrace *trace, size_t k);

// Appends a WRITE of `token`; rejects writes before the first READ.
enum SimulplStatus simulpl_trace_write(struct SimulplTrace *trace, const char *token);

// Number of target words written so far.
enum SimulplStatus simulpl_trace_hyp_len(const struct SimulplTrace *trace, size_t *out_len);

// Delay vector `g(t)`, one entry per written word.
enum SimulplStatus simulpl_trace_delays(const struct SimulplTrace *trace,
                                        size_t *buf,
                                        size_t capacity,
                                        size_t *out_len);

// Hypothesis as space-joined UTF-8, NUL-terminated. `out_len` receives
// the byte count including the terminator.
enum SimulplStatus simulpl_trace_hypothesis(const struct SimulplTrace *trace,
                                            char *buf,
                                            size_t capacity,
                                            size_t *out_len);

// AL, LAAL, AP and DAL of a trace. Undefined for an empty hypothesis.
enum SimulplStatus simulpl_trace_latency(const struct SimulplTrace *trace,
                                         struct SimulplLatency *out_scores);

// Latency metrics from an explicit delay vector.
enum SimulplStatus simulpl_latency_from_delays(const size_t *delays,
                                               size_t len,
                                               size_t source_len,
                                               size_t ref_len,
                                               struct SimulplLatency *out_scores);

// Worst-case AL through the prefix pair `(prefix_src_len, prefix_tgt_len)`
// and its linear bound.
enum SimulplStatus simulpl_worst_case_al_bound(size_t prefix_src_len,
                                               size_t prefix_tgt_len,
                                               size_t source_len,
                                               size_t ref_len,
                                               size_t max_tgt_len,
                                               struct SimulplWorstCase *out_bound);

// Pairwise inversions of a source-position sequence.
enum SimulplStatus simulpl_inversion_count(const size_t *positions,
                                           size_t len,
                                           uint64_t *out_count);

// NIR in percent. Sequences shorter than two are undefined.
enum SimulplStatus simulpl_nir(const size_t *positions, size_t len, double *out_percent);

// Prefix pairs `(L, T)` of a sentence pair with the given alignment, in
// increasing source length.
enum SimulplStatus simulpl_extract_prefixes(const struct SimulplLink *links,
                                            size_t n_links,
                                            size_t source_len,
                                            size_t target_len,
                                            struct SimulplPrefixPair *buf,
                                            size_t capacity,
                                            size_t *out_len);

// Default loss settings.
struct SimulplLossConfig simulpl_loss_config_default(void);

// Supervised multi-task loss of one sequence. `grad` may be null.
enum SimulplStatus simulpl_msft_loss(const struct SimulplTokenScores *sequence,
                                     double *out_value,
                                     struct SimulplScoreGrad *grad);

// Pairwise preference loss with a reference model.
enum SimulplStatus simulpl_simuldpo_loss(const struct SimulplTokenScores *preferred,
                                         const struct SimulplTokenScores *rejected,
                                         const struct SimulplLossConfig *cfg,
                                         double *out_value,
                                         struct SimulplScoreGrad *grad_preferred,
                                         struct SimulplScoreGrad *grad_rejected);

// Reference-free pairwise loss with a likelihood term on the preferred side.
enum SimulplStatus simulpl_simulcpo_loss(const struct SimulplTokenScores *preferred,
                                         const struct SimulplTokenScores *rejected,
                                         const struct SimulplLossConfig *cfg,
                                         double *out_value,
                                         struct SimulplScoreGrad *grad_preferred,
                                         struct SimulplScoreGrad *grad_rejected);

// Unpaired loss of one sequence against the reference point `z0`.
enum SimulplStatus simulpl_simulkto_loss(const struct SimulplTokenScores *sequence,
                                         bool is_preferred,
                                         double z0,
                                         const struct SimulplLossConfig *cfg,
                                         double *out_value,
                                         struct SimulplScoreGrad *grad);

enum SimulplStatus simulpl_model_load(const char *path, struct SimulplModel **out_model);

void simulpl_model_free(struct SimulplModel *model);

// Runs the confidence-thresholded read/write policy of `model` over a
// whitespace-tokenized source, reading `read_length` words per READ.
// The new trace's reference length is `ref_len`.
enum SimulplStatus simulpl_model_simulate(const struct SimulplModel *model,
                                          const char *source,
                                          size_t read_length,
                                          double threshold,
                                          size_t max_target_len,
                                          size_t ref_len,
                                          struct SimulplTrace **out_trace);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIMULPL_H */
