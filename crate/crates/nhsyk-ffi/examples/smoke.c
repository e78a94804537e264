/* cc -I crates/nhsyk-ffi/include crates/nhsyk-ffi/examples/smoke.c \
 *    target/release/libnhsyk_ffi.a -lm -lpthread -ldl -o smoke */
#include <stdio.h>
#include "nhsyk.h"

int main(void) {
  NhsykModel *m = NULL;
  char msg[256];
  if (nhsyk_model_new(1.0, 0.0, 0.5, 0.5, 8, 4.0, &m) != NHSYK_STATUS_OK) {
    nhsyk_last_error(msg, sizeof msg, NULL);
    fprintf(stderr, "model: %s\n", msg);
    return 1;
  }
  double re, im;
  NhsykStatus st = nhsyk_fcs_point(m, 40, 1.5707963267948966, 4, &re, &im);
  if (st != NHSYK_STATUS_OK) {
    nhsyk_last_error(msg, sizeof msg, NULL);
    fprintf(stderr, "fcs: %s\n", msg);
  } else {
    printf("F/N = %.8f %+.2ei\n", re, im);
  }
  nhsyk_model_free(m);
  return st;
}
