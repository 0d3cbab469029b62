#!/usr/bin/env node
import { runJob } from "../cli";

process.exit(runJob("surface", process.argv.slice(2)));
