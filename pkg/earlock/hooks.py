# -*- coding: utf-8 -*-

app_name = "earlock"
app_title = "Earlock"
app_publisher = "Earlock maintainers"
app_description = "Ear identification from colour-segmented slice regions with SIFT feature fusion"
app_license = "MIT"

# Subcommands exposed by the CLI, resolved by dotted path
commands = {
    "generate":  "earlock.earlock.api.cmd_generate",
    "enroll":    "earlock.earlock.api.cmd_enroll",
    "identify":  "earlock.earlock.api.cmd_identify",
    "verify":    "earlock.earlock.api.cmd_verify",
    "evaluate":  "earlock.earlock.api.cmd_evaluate",
    "calibrate": "earlock.earlock.api.cmd_calibrate",
}

# Dataset layout: <root>/<subject_id>/<split>/<image>; masks sit next to images
dataset_splits = ("ref", "probe")
mask_suffix = ".mask.png"
image_extensions = (".png", ".ppm")
