#!/usr/bin/env node
import { runJob } from "../cli";

process.exit(runJob("curves", process.argv.slice(2)));
