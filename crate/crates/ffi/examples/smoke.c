/* Traces one link of the built-in hall and prints its strongest path. */
#include <stdio.h>
#include <stdlib.h>

#include "thzdt.h"

static int check(ThzdtStatus s, const char *what) {
  if (s != THZDT_STATUS_OK) {
    char msg[256];
    thzdt_last_error_message(msg, sizeof msg);
    fprintf(stderr, "%s failed (%d): %s\n", what, (int)s, msg);
    return 1;
  }
  return 0;
}

int main(void) {
  ThzdtScene *scene = NULL;
  if (check(thzdt_scene_canonical(&scene), "scene")) return 1;

  size_t len = 0;
  ThzdtStatus s = thzdt_trace(scene, "tx1", "rx1", 2, NULL, 0, &len);
  if (s != THZDT_STATUS_BUFFER_TOO_SMALL || len == 0) return 1;
  ThzdtMpc *paths = malloc(len * sizeof *paths);
  if (check(thzdt_trace(scene, "tx1", "rx1", 2, paths, len, &len), "trace")) return 1;

  size_t best = 0;
  for (size_t i = 1; i < len; i++)
    if (paths[i].power_db > paths[best].power_db) best = i;
  printf("paths=%zu strongest=%.3f dB delay=%.3f ns order=%u\n", len, paths[best].power_db,
         paths[best].delay_ns, (unsigned)paths[best].bounce_order);

  if (thzdt_scene_load("/nonexistent.json", &scene) != THZDT_STATUS_IO) return 1;
  free(paths);
  thzdt_scene_free(scene);
  return 0;
}
