/* Builds a toy model, upscales a small gradient and reports an error path. */
#include <stdio.h>
#include "hpun.h"

int main(void) {
    HpunModel *m = NULL;
    if (hpun_model_build("toy", 2, 0, &m) != HPUN_STATUS_OK) {
        fprintf(stderr, "build: %s\n", hpun_last_error_message());
        return 1;
    }
    enum { W = 8, H = 6 };
    float in[3 * W * H], out[3 * 4 * W * H];
    for (int i = 0; i < 3 * W * H; i++) in[i] = (float)(i % 17) / 16.0f;
    if (hpun_model_upscale(m, in, W, H, out, sizeof out / sizeof *out) != HPUN_STATUS_OK) {
        fprintf(stderr, "upscale: %s\n", hpun_last_error_message());
        return 1;
    }
    HpunStatus st = hpun_model_upscale(m, in, W, H, out, 1);
    printf("scale=%u params=%llu bad_len_status=%d msg=%s\n", hpun_model_scale(m),
           (unsigned long long)hpun_model_param_count(m), (int)st, hpun_last_error_message());
    hpun_model_free(m);
    return st == HPUN_STATUS_DATA ? 0 : 1;
}
