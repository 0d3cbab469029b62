#!/usr/bin/env node
import { runJob } from "../cli";

process.exit(runJob("convergence", process.argv.slice(2)));
