#!/usr/bin/env node
/**
 * One-shot adapter commands. Each writes a single interchange stream that the
 * core CLI can validate and consume (`weakbox validate --kind ...`).
 */

import { promises as fs } from "node:fs";
import path from "node:path";

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import {
  BackendError,
  FixtureEmbedder,
  FixtureLocalizer,
  FixtureTracker,
  HttpEmbedder,
  HttpLocalizer,
  HttpTracker,
  parseBackendSpec,
} from "./backends.js";
import { embedTexts } from "./embed.js";
import { FormatError } from "./formats.js";
import { runLocalizer } from "./localize.js";
import { MaskError } from "./maskToBox.js";
import { readQueries, runTracker } from "./track.js";

async function writeOut(outPath: string, text: string): Promise<void> {
  await fs.writeFile(outPath, text, "utf-8");
}

export async function main(argv: string[]): Promise<number> {
  try {
    await yargs(argv)
      .scriptName("weakbox-adapters")
      .command(
        "localize <imageDir>",
        "Run an open-vocabulary localizer over a directory of images",
        (cmd) =>
          cmd
            .positional("imageDir", { type: "string", demandOption: true })
            .option("query", { type: "string", default: "baked good" })
            .option("model", {
              type: "string",
              choices: ["owlv2", "grounding-dino"] as const,
              default: "owlv2",
            })
            .option("backend", { type: "string", demandOption: true, describe: "fixture:<dir> or http(s) URL" })
            .option("out", { type: "string", demandOption: true }),
        async (args) => {
          const spec = parseBackendSpec(args.backend);
          const backend =
            spec.kind === "fixture"
              ? new FixtureLocalizer(spec.target)
              : new HttpLocalizer(spec.target, args.model);
          const text = await runLocalizer({
            imageDir: args.imageDir,
            query: args.query,
            model: args.model,
            backend,
          });
          await writeOut(args.out, text);
          const records = text.split("\n").filter((l) => l && !l.startsWith("#")).length;
          console.log(`wrote ${args.out}: ${records} raw detections`);
        },
      )
      .command(
        "track <videoPath>",
        "Propagate first-frame box queries through a video and emit a track stream",
        (cmd) =>
          cmd
            .positional("videoPath", { type: "string", demandOption: true })
            .option("queries", { type: "string", demandOption: true })
            .option("video-id", { type: "string", describe: "defaults to the video file stem" })
            .option("backend", { type: "string", demandOption: true })
            .option("out", { type: "string", demandOption: true }),
        async (args) => {
          const spec = parseBackendSpec(args.backend);
          const backend =
            spec.kind === "fixture" ? new FixtureTracker(spec.target) : new HttpTracker(spec.target);
          const queries = await readQueries(args.queries);
          const videoId = args.videoId ?? path.basename(args.videoPath, path.extname(args.videoPath));
          const text = await runTracker({ videoPath: args.videoPath, videoId, queries, backend });
          await writeOut(args.out, text);
          const records = text.split("\n").filter((l) => l && !l.startsWith("#")).length;
          console.log(`wrote ${args.out}: ${records} track records`);
        },
      )
      .command(
        "embed <namesFile>",
        "Embed one name per line and emit an embedding-set stream",
        (cmd) =>
          cmd
            .positional("namesFile", { type: "string", demandOption: true })
            .option("backend", { type: "string", demandOption: true })
            .option("out", { type: "string", demandOption: true }),
        async (args) => {
          const spec = parseBackendSpec(args.backend);
          const backend =
            spec.kind === "fixture" ? new FixtureEmbedder(spec.target) : new HttpEmbedder(spec.target);
          const text = await embedTexts({ namesFile: args.namesFile, backend });
          await writeOut(args.out, text);
          const records = text.split("\n").filter((l) => l && !l.startsWith("#")).length;
          console.log(`wrote ${args.out}: ${records} embeddings`);
        },
      )
      .demandCommand(1)
      .strict()
      .fail((message, error) => {
        throw error ?? new Error(message);
      })
      .parseAsync();
    return 0;
  } catch (error: any) {
    if (error instanceof BackendError || error instanceof FormatError || error instanceof MaskError) {
      console.error(`error: ${error.message}`);
      return 1;
    }
    console.error(`error: ${error?.message ?? error}`);
    return error?.code === "ENOENT" || error?.code === "EACCES" ? 2 : 1;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${path.resolve(process.argv[1])}`).href;
if (invokedDirectly) {
  main(hideBin(process.argv)).then((code) => {
    process.exitCode = code;
  });
}
