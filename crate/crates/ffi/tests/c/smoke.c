#include <stdio.h>
#include <string.h>
#include "termnet.h"

static const char *NET =
    "var A: a0 a1\n"
    "var B: b0 b1\n"
    "cpt A: 0.7 0.3\n"
    "cpt B | A:\n"
    "  a0: 0.9 0.1\n"
    "  a1: 0.2 0.8\n";

int main(void) {
    TnSession *s = NULL;
    if (tn_session_new_from_text(NET, &s) != TN_STATUS_OK) {
        fprintf(stderr, "open: %s\n", tn_last_error_message());
        return 1;
    }
    size_t q = 0, done = 0, n = 0;
    if (tn_session_query(s, "B", &q) != TN_STATUS_OK) return 2;
    if (tn_session_step(s, q, 100, &done) != TN_STATUS_OK) return 3;
    double lo[2], hi[2];
    if (tn_session_bounds(s, q, lo, hi, 2, &n) != TN_STATUS_OK || n != 2) return 4;
    if (lo[0] < 0.689 || lo[0] > 0.691 || lo[1] < 0.309 || lo[1] > 0.311) return 5;
    if (tn_session_evidence(s, "B", "b9") != TN_STATUS_UNKNOWN_VALUE) return 6;
    if (strlen(tn_last_error_message()) == 0) return 7;
    tn_session_free(s);
    printf("ok %s\n", tn_version());
    return 0;
}
