#include <stdio.h>
#include <string.h>

#include "simulpl.h"

#define CHECK(cond)                                              \
  do {                                                           \
    if (!(cond)) {                                               \
      fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__,    \
              #cond, simulpl_last_error_message());              \
      return 1;                                                  \
    }                                                            \
  } while (0)

int main(void) {
  SimulplTrace *trace = NULL;
  CHECK(simulpl_trace_new(3, 3, &trace) == SIMULPL_STATUS_OK);
  CHECK(simulpl_trace_write(trace, "early") == SIMULPL_STATUS_INVALID);
  CHECK(strlen(simulpl_last_error_message()) > 0);
  const char *words[] = {"a", "b", "c"};
  for (int i = 0; i < 3; i++) {
    CHECK(simulpl_trace_read(trace, 1) == SIMULPL_STATUS_OK);
    CHECK(simulpl_trace_write(trace, words[i]) == SIMULPL_STATUS_OK);
  }
  SimulplLatency lat;
  CHECK(simulpl_trace_latency(trace, &lat) == SIMULPL_STATUS_OK);
  CHECK(lat.al == 1.0 && lat.laal == 1.0 && lat.dal == 1.0);

  size_t len = 0;
  CHECK(simulpl_trace_hypothesis(trace, NULL, 0, &len) == SIMULPL_STATUS_BUFFER_TOO_SMALL);
  char text[16];
  CHECK(len <= sizeof text);
  CHECK(simulpl_trace_hypothesis(trace, text, sizeof text, &len) == SIMULPL_STATUS_OK);
  CHECK(strcmp(text, "a b c") == 0);
  simulpl_trace_free(trace);

  size_t positions[] = {3, 2, 1};
  double nir = 0.0;
  CHECK(simulpl_nir(positions, 3, &nir) == SIMULPL_STATUS_OK && nir == 100.0);

  SimulplLink links[] = {{1, 1}, {2, 2}};
  SimulplPrefixPair pairs[4];
  CHECK(simulpl_extract_prefixes(links, 2, 2, 2, pairs, 4, &len) == SIMULPL_STATUS_OK);
  CHECK(len == 2 && pairs[1].source_prefix_len == 2 && pairs[1].target_prefix_len == 2);

  double lp_w[] = {-0.5, -0.2}, ref_w[] = {-0.6, -0.4}, c_w[] = {1.0, 1.0};
  double lp_l[] = {-1.0, -0.2}, ref_l[] = {-0.8, -0.4}, c_l[] = {1.0, 1.0};
  SimulplTokenScores w = {lp_w, ref_w, c_w, 2}, l = {lp_l, ref_l, c_l, 2};
  SimulplLossConfig cfg = simulpl_loss_config_default();
  cfg.alpha = 0.0;
  cfg.beta = 1.0;
  cfg.terminal_mode = SIMULPL_TERMINAL_MODE_PENALTY_ONLY;
  double grad_lp[2];
  SimulplScoreGrad gw = {grad_lp, NULL};
  double loss = 0.0;
  CHECK(simulpl_simuldpo_loss(&w, &l, &cfg, &loss, &gw, NULL) == SIMULPL_STATUS_OK);
  CHECK(loss > 0.55 && loss < 0.56); /* -log sigmoid(0.3) */
  CHECK(grad_lp[0] < 0.0);

  printf("simulpl %s ok\n", simulpl_version());
  return 0;
}
