#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "predisplay.h"

static void check(PdStatus status, const char *what) {
    if (status != PD_STATUS_OK) {
        fprintf(stderr, "%s failed (%d): %s\n", what, (int)status, pd_last_error());
        exit(1);
    }
}

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: %s <bundle-dir>\n", argv[0]);
        return 2;
    }

    PdSequence *seq = NULL;
    check(pd_sequence_open(argv[1], &seq), "open");

    PdSequenceInfo info;
    check(pd_sequence_info(seq, &info), "info");
    printf("sequence: %ux%u, %llu frames @ %.1f Hz\n", info.width, info.height,
           (unsigned long long)info.frame_count, info.frame_rate);

    size_t pixels = (size_t)info.width * info.height;
    uint8_t *rgb = malloc(pixels * 3);
    uint8_t *holes = malloc(pixels);
    double hole_fraction = 0.0;
    check(pd_compensate_to_recorded_pose(seq, 0, 3, PD_METHOD_POINTCLOUD, rgb,
                                         pixels * 3, holes, pixels, &hole_fraction),
          "compensate");
    size_t nonzero = 0, hole_px = 0;
    for (size_t i = 0; i < pixels * 3; i++) nonzero += rgb[i] != 0;
    for (size_t i = 0; i < pixels; i++) hole_px += holes[i] == 255;
    printf("compensated frame 0 -> pose of frame 3: %zu nonzero bytes, "
           "%.3f%% holes (%zu px)\n",
           nonzero, 100.0 * hole_fraction, hole_px);

    PdPlanarPose motion;
    check(pd_predict_planar_displacement(seq, 0.0, 0.5, &motion), "predict");
    printf("predicted displacement over 0.5 s: x=%.4f m, y=%.4f m, theta=%.4f rad\n",
           motion.x, motion.y, motion.theta);

    /* Error paths surface detail through pd_last_error. */
    PdStatus status = pd_compensate_to_recorded_pose(
        seq, info.frame_count, 1, PD_METHOD_POINTCLOUD, rgb, pixels * 3, NULL, 0, NULL);
    if (status != PD_STATUS_OUT_OF_RANGE) {
        fprintf(stderr, "expected OUT_OF_RANGE, got %d\n", (int)status);
        return 1;
    }
    printf("out-of-range correctly rejected: %s\n", pd_last_error());

    free(rgb);
    free(holes);
    pd_sequence_close(seq);
    printf("ok\n");
    return 0;
}
